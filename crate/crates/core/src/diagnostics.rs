//! Quality measures of designs: entropy, spatial balance over Voronoi cells,
//! and Monte Carlo checks of first- and second-order inclusion probabilities.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::oracle::EnumeratedDesign;
use crate::replicate::{fold_replicates, Execution, Sampler};
use crate::sample::{InclusionProbabilities, Sample, SIZE_TOLERANCE};

/// Entropy `-sum_s p(s) ln p(s)`, with `0 ln 0 = 0`.
pub fn design_entropy(design: &EnumeratedDesign) -> f64 {
    design
        .support()
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|(_, p)| -p * p.ln())
        .sum()
}

/// Same, from a bare list of probabilities.
pub fn entropy_of(probabilities: &[f64]) -> Result<f64> {
    if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid("probabilities must be nonnegative"));
    }
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
    }
    Ok(probabilities
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.ln())
        .sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialBalance {
    /// Sum of inclusion probabilities in the Voronoi cell of each sampled unit, in sample order.
    pub v: Vec<f64>,
    /// For every population unit, the position in the sample of its cell.
    pub cell_of: Vec<usize>,
    pub index: f64,
}

/// Voronoi spatial-balance index of a sample.
///
/// Every population unit joins the cell of its nearest sampled unit (ties go
/// to the smallest unit index). When the probabilities sum to the sample size
/// the index is `mean (v_i - 1)^2`, otherwise the variance of the `v_i`.
pub fn spatial_balance_index(
    coords: &DMatrix<f64>,
    sample: &Sample,
    pi: &InclusionProbabilities,
) -> Result<SpatialBalance> {
    let big_n = coords.nrows();
    pi.check_len(big_n)?;
    if sample.population_size() != big_n {
        return Err(Error::LengthMismatch {
            expected: big_n,
            found: sample.population_size(),
        });
    }
    let units = sample.units();
    if units.is_empty() {
        return Err(Error::invalid("spatial balance of an empty sample"));
    }
    let dim = coords.ncols();
    let mut v = vec![0.0; units.len()];
    let mut cell_of = vec![0; big_n];
    for k in 0..big_n {
        let mut best = (f64::INFINITY, 0);
        for (i, &s) in units.iter().enumerate() {
            let d: f64 = (0..dim).map(|j| (coords[(k, j)] - coords[(s, j)]).powi(2)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        cell_of[k] = best.1;
        v[best.1] += pi[k];
    }
    let n = units.len() as f64;
    let index = if (pi.expected_size() - n).abs() <= SIZE_TOLERANCE * n.max(1.0) {
        v.iter().map(|x| (x - 1.0).powi(2)).sum::<f64>() / n
    } else {
        let mean = v.iter().sum::<f64>() / n;
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
    };
    Ok(SpatialBalance { v, cell_of, index })
}

/// Empirical first-order inclusion probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct InclusionCheck {
    pub pi_hat: Vec<f64>,
    /// Binomial standard error `sqrt(pi (1 - pi) / R)` under the target.
    pub standard_error: Vec<f64>,
    /// `max_k |pi_hat_k - pi_k| / se_k`; infinite if a unit with target 0 or 1 deviates.
    pub max_studentized: f64,
    pub replications: usize,
}

#[allow(clippy::too_many_arguments)]
fn run<S: Sampler + ?Sized, A, F>(
    sampler: &S,
    population: usize,
    replications: usize,
    master_seed: u64,
    exec: Execution,
    init: impl Fn() -> A + Sync + Send,
    add: F,
    merge: impl Fn(&mut A, A) + Sync + Send,
) -> Result<A>
where
    A: Send,
    F: Fn(&mut A, &Sample) + Sync + Send,
{
    fold_replicates(
        replications,
        master_seed,
        exec,
        || Ok(init()),
        |acc: &mut Result<A>, _, rng| {
            if let Ok(a) = acc {
                match sampler.draw(rng) {
                    Ok(s) if s.population_size() == population => add(a, &s),
                    Ok(s) => {
                        *acc = Err(Error::LengthMismatch {
                            expected: population,
                            found: s.population_size(),
                        })
                    }
                    Err(e) => *acc = Err(e),
                }
            }
        },
        |a, b| {
            let mut a = a?;
            merge(&mut a, b?);
            Ok(a)
        },
    )
}

/// Draws `replications` samples and compares unit frequencies with `pi`.
pub fn monte_carlo_inclusion<S: Sampler + ?Sized>(
    sampler: &S,
    pi: &InclusionProbabilities,
    replications: usize,
    master_seed: u64,
    exec: Execution,
) -> Result<InclusionCheck> {
    if replications == 0 {
        return Err(Error::invalid("at least one replication is needed"));
    }
    let big_n = pi.len();
    let counts = run(
        sampler,
        big_n,
        replications,
        master_seed,
        exec,
        || vec![0u64; big_n],
        |c, s| s.units().iter().for_each(|&k| c[k] += 1),
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
    )?;
    let r = replications as f64;
    let pi_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / r).collect();
    let standard_error: Vec<f64> = pi
        .as_slice()
        .iter()
        .map(|p| (p * (1.0 - p) / r).sqrt())
        .collect();
    let max_studentized = (0..big_n)
        .map(|k| {
            let d = (pi_hat[k] - pi[k]).abs();
            if d == 0.0 {
                0.0
            } else {
                d / standard_error[k]
            }
        })
        .fold(0.0, f64::max);
    Ok(InclusionCheck {
        pi_hat,
        standard_error,
        max_studentized,
        replications,
    })
}

/// Empirical `Delta_kl` with delete-one jackknife standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaEstimate {
    pub delta: DMatrix<f64>,
    pub standard_error: DMatrix<f64>,
    pub pi_hat: Vec<f64>,
    pub replications: usize,
}

/// Jackknife standard error of `a/R - b c / R^2` from pair counts, where `a`
/// counts joint inclusions and `b`, `c` the single inclusions.
fn jackknife_se(a: u64, b: u64, c: u64, r: u64) -> f64 {
    let rf = r as f64;
    let m = rf - 1.0;
    let counts = [
        (a, 1.0, 1.0),
        (b - a, 1.0, 0.0),
        (c - a, 0.0, 1.0),
        (r + a - b - c, 0.0, 0.0),
    ];
    let (a, b, c) = (a as f64, b as f64, c as f64);
    let leave_out = |ik: f64, il: f64| (a - ik * il) / m - (b - ik) * (c - il) / (m * m);
    let mean: f64 = counts
        .iter()
        .map(|&(n, ik, il)| n as f64 * leave_out(ik, il))
        .sum::<f64>()
        / rf;
    let ss: f64 = counts
        .iter()
        .map(|&(n, ik, il)| n as f64 * (leave_out(ik, il) - mean).powi(2))
        .sum();
    (m / rf * ss).sqrt()
}

pub fn estimate_delta<S: Sampler + ?Sized>(
    sampler: &S,
    population: usize,
    replications: usize,
    master_seed: u64,
    exec: Execution,
) -> Result<DeltaEstimate> {
    if replications < 2 {
        return Err(Error::invalid("at least two replications are needed"));
    }
    let big_n = population;
    let pairs = run(
        sampler,
        big_n,
        replications,
        master_seed,
        exec,
        || vec![0u64; big_n * big_n],
        |c, s| {
            let u = s.units();
            for (i, &k) in u.iter().enumerate() {
                for &l in &u[i..] {
                    c[k * big_n + l] += 1;
                }
            }
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
    )?;
    let r = replications as u64;
    let rf = r as f64;
    let count = |k: usize, l: usize| pairs[k.min(l) * big_n + k.max(l)];
    let pi_hat: Vec<f64> = (0..big_n).map(|k| count(k, k) as f64 / rf).collect();
    let mut delta = DMatrix::zeros(big_n, big_n);
    let mut standard_error = DMatrix::zeros(big_n, big_n);
    for k in 0..big_n {
        for l in k..big_n {
            let (a, b, c) = (count(k, l), count(k, k), count(l, l));
            let d = a as f64 / rf - pi_hat[k] * pi_hat[l];
            let se = jackknife_se(a, b, c, r);
            delta[(k, l)] = d;
            delta[(l, k)] = d;
            standard_error[(k, l)] = se;
            standard_error[(l, k)] = se;
        }
    }
    Ok(DeltaEstimate {
        delta,
        standard_error,
        pi_hat,
        replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Design;
    use crate::oracle::enumerate_design;
    use crate::replicate::DesignRng;

    #[test]
    fn entropies() {
        let det = EnumeratedDesign::new(3, vec![(Sample::census(3), 1.0)]).unwrap();
        assert_eq!(design_entropy(&det), 0.0);
        let srs = enumerate_design(&Design::Srs { population: 4, n: 2 }).unwrap();
        assert!((design_entropy(&srs) - 6f64.ln()).abs() < 1e-12);
        let bern = enumerate_design(&Design::Bernoulli { population: 3, pi: 0.5 }).unwrap();
        assert!((design_entropy(&bern) - 3.0 * 2f64.ln()).abs() < 1e-12);
        assert!((entropy_of(&[0.5, 0.5, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(entropy_of(&[0.5, 0.6]).is_err());
        assert!(entropy_of(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn voronoi_cells() {
        let coords = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let pi = InclusionProbabilities::uniform(4, 2).unwrap();
        // Units 0 and 2 sampled; unit 1 is equidistant and goes to unit 0.
        let s = Sample::from_indices(4, vec![0, 2]).unwrap();
        let b = spatial_balance_index(&coords, &s, &pi).unwrap();
        assert_eq!(b.cell_of, vec![0, 0, 1, 1]);
        assert_eq!(b.v, vec![1.0, 1.0]);
        assert_eq!(b.index, 0.0);
        let s = Sample::from_indices(4, vec![0, 1]).unwrap();
        let b = spatial_balance_index(&coords, &s, &pi).unwrap();
        assert_eq!(b.v, vec![0.5, 1.5]);
        assert!((b.index - 0.25).abs() < 1e-15);
        assert!((b.v.iter().sum::<f64>() - pi.expected_size()).abs() < 1e-12);
        // Sum differs from the sample size: plain variance.
        let s = Sample::from_indices(4, vec![0]).unwrap();
        let b = spatial_balance_index(&coords, &s, &pi).unwrap();
        assert_eq!(b.index, 0.0);
        assert!(spatial_balance_index(&coords, &Sample::empty(4), &pi).is_err());
    }

    #[test]
    fn single_unit_sample() {
        let coords = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 0.0]);
        let pi = InclusionProbabilities::new(vec![0.2, 0.5, 0.3]).unwrap();
        let b = spatial_balance_index(&coords, &Sample::from_indices(3, vec![1]).unwrap(), &pi).unwrap();
        assert!((b.v[0] - 1.0).abs() < 1e-15);
        assert!(b.index < 1e-30);
    }

    #[test]
    fn census_inclusion() {
        let census = |_: &mut DesignRng| Ok(Sample::census(4));
        let pi = InclusionProbabilities::new(vec![1.0; 4]).unwrap();
        let c = monte_carlo_inclusion(&census, &pi, 100, 1, Execution::Parallel).unwrap();
        assert!(c.pi_hat.iter().all(|&p| p == 1.0));
        assert_eq!(c.max_studentized, 0.0);
    }

    #[test]
    fn srs_inclusion() {
        let srs = Design::Srs { population: 10, n: 3 };
        let pi = srs.inclusion_probabilities();
        let c = monte_carlo_inclusion(&srs, &pi, 100_000, 2, Execution::Parallel).unwrap();
        assert!(c.max_studentized < 4.0, "{}", c.max_studentized);
    }

    #[test]
    fn srs_delta() {
        let srs = Design::Srs { population: 4, n: 2 };
        let d = estimate_delta(&srs, 4, 100_000, 3, Execution::Parallel).unwrap();
        for k in 0..4 {
            for l in 0..4 {
                assert_eq!(d.delta[(k, l)], d.delta[(l, k)]);
                if k != l {
                    let z = (d.delta[(k, l)] + 1.0 / 12.0) / d.standard_error[(k, l)];
                    assert!(z.abs() < 4.0, "({k},{l}) z={z}");
                }
            }
        }
    }

    #[test]
    fn jackknife_matches_direct_computation() {
        // Indicator pairs for five replications.
        let reps = [(1, 1), (1, 0), (0, 1), (1, 1), (0, 0)];
        let r = reps.len();
        let est = |skip: Option<usize>| {
            let kept: Vec<_> = reps.iter().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, p)| *p).collect();
            let m = kept.len() as f64;
            let a = kept.iter().filter(|(x, y)| *x == 1 && *y == 1).count() as f64;
            let b = kept.iter().filter(|(x, _)| *x == 1).count() as f64;
            let c = kept.iter().filter(|(_, y)| *y == 1).count() as f64;
            a / m - b * c / (m * m)
        };
        let loo: Vec<f64> = (0..r).map(|i| est(Some(i))).collect();
        let mean = loo.iter().sum::<f64>() / r as f64;
        let direct = ((r as f64 - 1.0) / r as f64 * loo.iter().map(|x| (x - mean).powi(2)).sum::<f64>()).sqrt();
        assert!((jackknife_se(2, 3, 3, 5) - direct).abs() < 1e-15);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let srs = Design::Srs { population: 6, n: 2 };
        let a = estimate_delta(&srs, 6, 2000, 4, Execution::Sequential).unwrap();
        let b = estimate_delta(&srs, 6, 2000, 4, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
