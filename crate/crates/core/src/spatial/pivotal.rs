use rand::Rng;

use super::distance::DistanceContext;
use super::neighbors::ActiveSet;
use crate::cube::RESOLVED_EPS;
use crate::error::{Error, Result};
use crate::sample::{InclusionProbabilities, Sample};

/// One duel between two fractional units. The sum is kept and one of the two
/// ends at 0 or 1; each component keeps its expectation.
pub fn pivotal_update<R: Rng + ?Sized>(pi_i: f64, pi_j: f64, rng: &mut R) -> (f64, f64) {
    debug_assert!(pi_i > 0.0 && pi_i < 1.0 && pi_j > 0.0 && pi_j < 1.0);
    let s = pi_i + pi_j;
    let u = rng.random::<f64>();
    if s > 1.0 {
        if u * (2.0 - s) < 1.0 - pi_j {
            (1.0, s - 1.0)
        } else {
            (s - 1.0, 1.0)
        }
    } else if u * s < pi_i {
        (s, 0.0)
    } else {
        (0.0, s)
    }
}

fn snap(x: f64) -> f64 {
    if x < RESOLVED_EPS {
        0.0
    } else if x > 1.0 - RESOLVED_EPS {
        1.0
    } else {
        x
    }
}

fn fractional(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

fn finish<R: Rng + ?Sized>(v: &mut [f64], last: Option<usize>, rng: &mut R) -> Sample {
    if let Some(k) = last {
        v[k] = if rng.random::<f64>() < v[k] { 1.0 } else { 0.0 };
    }
    Sample::from_unit_vector(v)
}

/// Duels the first two unresolved units in population order until at most one remains.
pub fn sequential_pivotal_sample<R: Rng + ?Sized>(pi: &InclusionProbabilities, rng: &mut R) -> Sample {
    let mut v = pi.as_slice().to_vec();
    let mut carry: Option<usize> = None;
    for k in 0..v.len() {
        if !fractional(v[k]) {
            continue;
        }
        let Some(c) = carry else {
            carry = Some(k);
            continue;
        };
        let (a, b) = pivotal_update(v[c], v[k], rng);
        v[c] = snap(a);
        v[k] = snap(b);
        carry = [c, k].into_iter().find(|&u| fractional(v[u]));
    }
    finish(&mut v, carry, rng)
}

/// Picks a random unresolved unit and duels it with its nearest unresolved
/// neighbour (ties at random) until at most one unresolved unit remains.
pub fn local_pivotal_sample<R: Rng + ?Sized>(
    pi: &InclusionProbabilities,
    ctx: &DistanceContext,
    rng: &mut R,
) -> Result<Sample> {
    if ctx.len() != pi.len() {
        return Err(Error::LengthMismatch {
            expected: pi.len(),
            found: ctx.len(),
        });
    }
    let mut v = pi.as_slice().to_vec();
    let units: Vec<usize> = (0..v.len()).filter(|&k| fractional(v[k])).collect();
    let mut active = ActiveSet::new(ctx, units);
    while active.len() > 1 {
        let i = active.pick(rng);
        let j = active.nearest(i, 1, rng)[0];
        let (a, b) = pivotal_update(v[i], v[j], rng);
        v[i] = snap(a);
        v[j] = snap(b);
        for u in [i, j] {
            if !fractional(v[u]) {
                active.remove(u);
            }
        }
    }
    let last = active.units().first().copied();
    Ok(finish(&mut v, last, rng))
}
