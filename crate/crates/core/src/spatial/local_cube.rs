use rand::Rng;

use super::distance::DistanceContext;
use super::neighbors::ActiveSet;
use crate::cube::{is_resolved, kernel_vector, landing_phase, random_step, BalancingProblem, FlightState};
use crate::error::{Error, Result};
use crate::sample::Sample;

/// Cube method run on clusters of neighbouring units: a random unresolved
/// unit and its `p` nearest unresolved neighbours move along a local balancing
/// direction until one of them is resolved. The last units go through the
/// landing phase.
pub fn local_cube_sample<R: Rng + ?Sized>(
    problem: &BalancingProblem,
    ctx: &DistanceContext,
    rng: &mut R,
) -> Result<Sample> {
    let n = problem.population_size();
    if ctx.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: ctx.len(),
        });
    }
    let p = problem.rank();
    let mut v = problem.pi().as_slice().to_vec();
    let units: Vec<usize> = (0..n).filter(|&k| !is_resolved(v[k])).collect();
    let mut active = ActiveSet::new(ctx, units);
    let width = p + 1;
    let mut block = vec![0.0; p * width];
    let mut local = vec![0.0; width];
    while active.len() > p {
        let k = active.pick(rng);
        let mut cluster = vec![k];
        cluster.extend(active.nearest(k, p, rng));
        for (c, &unit) in cluster.iter().enumerate() {
            for (r, x) in problem.a_row(unit, p).enumerate() {
                block[r * width + c] = x;
            }
            local[c] = v[unit];
        }
        let u = if p == 0 { vec![1.0] } else { kernel_vector(&mut block, p, width) };
        random_step(&mut local, &u, rng);
        for (c, &unit) in cluster.iter().enumerate() {
            v[unit] = local[c];
            if is_resolved(v[unit]) {
                active.remove(unit);
            }
        }
    }
    let mut free = active.units().to_vec();
    free.sort_unstable();
    landing_phase(FlightState { v, free }, problem, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{balance_check, cube_sample, BalanceNorm};
    use crate::frame::{grid_frame, GridAux};
    use crate::replicate::replicate_rng;
    use crate::sample::InclusionProbabilities;
    use crate::spatial::local_pivotal_sample;
    use nalgebra::DMatrix;

    #[test]
    fn balanced_and_fixed_size_on_grid() {
        let grid = grid_frame(10, GridAux::CoordsAndOne).unwrap();
        let ctx = DistanceContext::from_coords(&grid).unwrap();
        let pi = InclusionProbabilities::uniform(100, 10).unwrap();
        let problem = BalancingProblem::new(pi.clone(), grid.aux().clone()).unwrap();
        let mut rng = replicate_rng(31, 0);
        for _ in 0..200 {
            let s = local_cube_sample(&problem, &ctx, &mut rng).unwrap();
            assert_eq!(s.size(), 10);
            let report = balance_check(&s, &pi, grid.aux(), BalanceNorm::Linf, 1.0).unwrap();
            assert!(report.deviations[0] < 1e-9);
            assert!(report.max_deviation < 0.25);
        }
    }

    #[test]
    fn whole_population_cluster_matches_cube() {
        // p + 1 = N: one cluster covering everything, as in the plain cube method.
        let pi = InclusionProbabilities::new(vec![0.3, 0.6, 0.5]).unwrap();
        let aux = DMatrix::from_row_slice(3, 2, &[0.3, 1.0, 0.6, 0.0, 0.5, 2.0]);
        let coords = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let ctx = DistanceContext::euclidean(&coords).unwrap();
        let problem = BalancingProblem::new(pi.clone(), aux).unwrap();
        let r = 30_000u64;
        let mut local = std::collections::HashMap::new();
        let mut global = std::collections::HashMap::new();
        for i in 0..r {
            *local
                .entry(local_cube_sample(&problem, &ctx, &mut replicate_rng(32, i)).unwrap())
                .or_insert(0usize) += 1;
            *global
                .entry(cube_sample(&problem, &mut replicate_rng(33, i)).unwrap().0)
                .or_insert(0usize) += 1;
        }
        for (s, &c) in &global {
            let p = c as f64 / r as f64;
            let q = *local.get(s).unwrap_or(&0) as f64 / r as f64;
            let se = (2.0 * p * (1.0 - p) / r as f64).sqrt();
            assert!((p - q).abs() < 4.5 * se + 1e-3, "{s:?}: {p} vs {q}");
        }
    }

    #[test]
    fn pi_alone_behaves_like_local_pivotal() {
        let coords = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 3.0, 7.0]);
        let ctx = DistanceContext::euclidean(&coords).unwrap();
        let pi = InclusionProbabilities::new(vec![0.4, 0.7, 0.5, 0.4]).unwrap();
        let aux = DMatrix::from_column_slice(4, 1, pi.as_slice());
        let problem = BalancingProblem::new(pi.clone(), aux).unwrap();
        let r = 40_000u64;
        let mut a = std::collections::HashMap::new();
        let mut b = std::collections::HashMap::new();
        for i in 0..r {
            *a.entry(local_cube_sample(&problem, &ctx, &mut replicate_rng(34, i)).unwrap())
                .or_insert(0usize) += 1;
            *b.entry(local_pivotal_sample(&pi, &ctx, &mut replicate_rng(35, i)).unwrap())
                .or_insert(0usize) += 1;
        }
        let keys: std::collections::BTreeSet<_> = a.keys().chain(b.keys()).cloned().collect();
        for s in keys {
            let p = *a.get(&s).unwrap_or(&0) as f64 / r as f64;
            let q = *b.get(&s).unwrap_or(&0) as f64 / r as f64;
            let m = (p + q) / 2.0;
            let se = (2.0 * m * (1.0 - m) / r as f64).sqrt();
            assert!((p - q).abs() < 4.5 * se + 1e-3, "{s:?}: {p} vs {q}");
        }
    }
}
