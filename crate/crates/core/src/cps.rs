//! Conditional Poisson sampling: the fixed-size design with
//! `p(s) ∝ exp(sum_{k in s} lambda_k)`, which has maximum entropy among
//! fixed-size designs with the same inclusion probabilities.
//!
//! Every quantity goes through elementary symmetric functions of the weights
//! `w_k = exp(lambda_k)`, kept in log space:
//!
//! ```text
//! e_r(w_1..w_j) = e_r(w_1..w_{j-1}) + w_j e_{r-1}(w_1..w_{j-1})
//! pi_k          = w_k e_{n-1}(w without k) / e_n(w)
//! ```

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sample::{InclusionProbabilities, Sample, SIZE_TOLERANCE};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Above this many free units the solver skips Newton steps (the Jacobian is dense).
const NEWTON_MAX_UNITS: usize = 400;

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `table[j][r] = ln e_r(w_0..w_{j-1})` for `j = 0..=M`, `r = 0..=m`.
fn forward_table(lambda: &[f64], m: usize) -> Vec<Vec<f64>> {
    let mut t = vec![vec![f64::NEG_INFINITY; m + 1]; lambda.len() + 1];
    t[0][0] = 0.0;
    for (j, &l) in lambda.iter().enumerate() {
        let (prev, next) = t.split_at_mut(j + 1);
        let (prev, next) = (&prev[j], &mut next[0]);
        next[0] = 0.0;
        for r in 1..=m {
            next[r] = log_add(prev[r], l + prev[r - 1]);
        }
    }
    t
}

/// `table[j][r] = ln e_r(w_j..w_{M-1})` for `j = 0..=M`.
fn backward_table(lambda: &[f64], m: usize) -> Vec<Vec<f64>> {
    let big_m = lambda.len();
    let mut t = vec![vec![f64::NEG_INFINITY; m + 1]; big_m + 1];
    t[big_m][0] = 0.0;
    for j in (0..big_m).rev() {
        let (head, tail) = t.split_at_mut(j + 1);
        let (cur, next) = (&mut head[j], &tail[0]);
        cur[0] = 0.0;
        for r in 1..=m {
            cur[r] = log_add(next[r], lambda[j] + next[r - 1]);
        }
    }
    t
}

/// Inclusion probabilities of the size-`m` conditional Poisson design with parameters `lambda`.
pub fn induced_inclusion(lambda: &[f64], m: usize) -> Vec<f64> {
    let big_m = lambda.len();
    if m == 0 {
        return vec![0.0; big_m];
    }
    if m >= big_m {
        return vec![1.0; big_m];
    }
    let fwd = forward_table(lambda, m);
    let bwd = backward_table(lambda, m);
    let log_total = fwd[big_m][m];
    (0..big_m)
        .map(|k| {
            let mut acc = f64::NEG_INFINITY;
            for a in 0..m {
                acc = log_add(acc, fwd[k][a] + bwd[k + 1][m - 1 - a]);
            }
            (lambda[k] + acc - log_total).exp().min(1.0)
        })
        .collect()
}

/// Joint inclusion probabilities, computed as `pi_k * pi_{l | k}` where the
/// conditional design given `k` is conditional Poisson of size `m - 1` on the
/// other units. The result is symmetrised.
pub fn induced_joint_inclusion(lambda: &[f64], m: usize) -> DMatrix<f64> {
    let big_m = lambda.len();
    let pi = induced_inclusion(lambda, m);
    let mut joint = DMatrix::zeros(big_m, big_m);
    let mut rest = Vec::with_capacity(big_m.saturating_sub(1));
    for k in 0..big_m {
        joint[(k, k)] = pi[k];
        if m < 2 {
            continue;
        }
        rest.clear();
        rest.extend(lambda.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &l)| l));
        let cond = induced_inclusion(&rest, m - 1);
        for (idx, l) in (0..big_m).filter(|&l| l != k).enumerate() {
            joint[(k, l)] = pi[k] * cond[idx];
        }
    }
    (&joint + joint.transpose()) * 0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnitStatus {
    Excluded,
    Certain,
    Free(usize),
}

/// Solved conditional Poisson design.
#[derive(Clone, Debug)]
pub struct CpsParameters {
    status: Vec<UnitStatus>,
    /// Parameters of the free units, normalised to mean zero.
    free_lambda: Vec<f64>,
    free_units: Vec<usize>,
    certain: usize,
    n: usize,
    target_pi: InclusionProbabilities,
    backward: Vec<Vec<f64>>,
}

impl CpsParameters {
    /// Design with given parameters; `lambda` may contain `±inf` for excluded or certain units.
    pub fn from_lambda(lambda: &[f64], n: usize) -> Result<Self> {
        let status: Vec<UnitStatus> = lambda
            .iter()
            .scan(0usize, |free, &l| {
                Some(if l == f64::INFINITY {
                    UnitStatus::Certain
                } else if l == f64::NEG_INFINITY || l.is_nan() {
                    UnitStatus::Excluded
                } else {
                    *free += 1;
                    UnitStatus::Free(*free - 1)
                })
            })
            .collect();
        if lambda.iter().any(|l| l.is_nan()) {
            return Err(Error::invalid("NaN parameter"));
        }
        let certain = status.iter().filter(|s| **s == UnitStatus::Certain).count();
        let free_units: Vec<usize> = (0..lambda.len())
            .filter(|&k| matches!(status[k], UnitStatus::Free(_)))
            .collect();
        if n < certain || n - certain > free_units.len() {
            return Err(Error::invalid(format!(
                "sample size {n} incompatible with {certain} certain and {} free units",
                free_units.len()
            )));
        }
        let mut free_lambda: Vec<f64> = free_units.iter().map(|&k| lambda[k]).collect();
        normalize(&mut free_lambda);
        let m = n - certain;
        let mut pi = vec![0.0; lambda.len()];
        for (k, s) in status.iter().enumerate() {
            if *s == UnitStatus::Certain {
                pi[k] = 1.0;
            }
        }
        for (&k, p) in free_units.iter().zip(induced_inclusion(&free_lambda, m)) {
            pi[k] = p;
        }
        Ok(Self {
            backward: backward_table(&free_lambda, m),
            status,
            free_lambda,
            free_units,
            certain,
            n,
            target_pi: InclusionProbabilities::new(pi)?,
        })
    }

    pub fn population_size(&self) -> usize {
        self.status.len()
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    /// `lambda_k` for every unit; `+inf` for certain and `-inf` for excluded units.
    pub fn lambda(&self) -> Vec<f64> {
        self.status
            .iter()
            .map(|s| match s {
                UnitStatus::Excluded => f64::NEG_INFINITY,
                UnitStatus::Certain => f64::INFINITY,
                UnitStatus::Free(i) => self.free_lambda[*i],
            })
            .collect()
    }

    /// The inclusion probabilities the parameters were solved for.
    pub fn target_pi(&self) -> &InclusionProbabilities {
        &self.target_pi
    }

    fn free_size(&self) -> usize {
        self.n - self.certain
    }

    /// Inclusion probabilities induced by the parameters.
    pub fn inclusion_probabilities(&self) -> Vec<f64> {
        let mut pi: Vec<f64> = self
            .status
            .iter()
            .map(|s| if *s == UnitStatus::Certain { 1.0 } else { 0.0 })
            .collect();
        for (&k, p) in self
            .free_units
            .iter()
            .zip(induced_inclusion(&self.free_lambda, self.free_size()))
        {
            pi[k] = p;
        }
        pi
    }
}

fn normalize(lambda: &mut [f64]) {
    if lambda.is_empty() {
        return;
    }
    let mean = lambda.iter().sum::<f64>() / lambda.len() as f64;
    lambda.iter_mut().for_each(|l| *l -= mean);
}

fn max_residual(target: &[f64], got: &[f64]) -> f64 {
    target
        .iter()
        .zip(got)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Newton direction solving `Delta d = r` with `1' d = 0`.
///
/// `Delta` is the Jacobian of `lambda -> pi(lambda)`; it is singular along the
/// all-ones direction, so the rank-one term `11'` is added before factorising.
fn newton_direction(lambda: &[f64], m: usize, residual: &[f64]) -> Option<Vec<f64>> {
    let big_m = lambda.len();
    let joint = induced_joint_inclusion(lambda, m);
    let mut jac = DMatrix::from_fn(big_m, big_m, |k, l| {
        let delta = if k == l {
            joint[(k, k)] * (1.0 - joint[(k, k)])
        } else {
            joint[(k, l)] - joint[(k, k)] * joint[(l, l)]
        };
        delta + 1.0
    });
    let mut rhs = nalgebra::DVector::from_column_slice(residual);
    for k in 0..big_m {
        let s = jac.row(k).amax();
        if s > 0.0 {
            jac.row_mut(k).scale_mut(1.0 / s);
            rhs[k] /= s;
        }
    }
    let d = jac.lu().solve(&rhs)?;
    d.iter().all(|x| x.is_finite()).then(|| d.iter().copied().collect())
}

/// Finds `lambda` such that the conditional Poisson design of size `n` has
/// inclusion probabilities `pi` within `tol`.
///
/// Units with `pi_k` equal to 0 or 1 are excluded or taken with certainty.
/// Damped Newton steps are used for up to a few hundred free units, with the
/// fixed-point update `lambda += ln pi - ln pi(lambda)` as fallback.
pub fn solve_lambda(
    pi: &InclusionProbabilities,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<CpsParameters> {
    let target = pi.as_slice();
    if (pi.expected_size() - n as f64).abs() > SIZE_TOLERANCE {
        return Err(Error::invalid(format!(
            "inclusion probabilities sum to {} but the sample size is {n}",
            pi.expected_size()
        )));
    }
    let free_units: Vec<usize> = (0..target.len())
        .filter(|&k| target[k] > 0.0 && target[k] < 1.0)
        .collect();
    let certain = target.iter().filter(|&&p| p >= 1.0).count();
    let m = n - certain;
    let goal: Vec<f64> = free_units.iter().map(|&k| target[k]).collect();

    let mut lambda: Vec<f64> = goal.iter().map(|&p| (p / (1.0 - p)).ln()).collect();
    normalize(&mut lambda);
    let mut current = induced_inclusion(&lambda, m);
    let mut residual = max_residual(&goal, &current);
    let mut iterations = 0;
    while residual > tol {
        if iterations == max_iter {
            return Err(Error::NonConvergence {
                iterations,
                residual,
            });
        }
        iterations += 1;

        let mut accepted = false;
        if lambda.len() <= NEWTON_MAX_UNITS {
            let r: Vec<f64> = goal.iter().zip(&current).map(|(a, b)| a - b).collect();
            if let Some(d) = newton_direction(&lambda, m, &r) {
                let mut step = 1.0;
                for _ in 0..30 {
                    let mut trial: Vec<f64> =
                        lambda.iter().zip(&d).map(|(l, dl)| l + step * dl).collect();
                    normalize(&mut trial);
                    let got = induced_inclusion(&trial, m);
                    let res = max_residual(&goal, &got);
                    if res.is_finite() && res < residual {
                        lambda = trial;
                        current = got;
                        residual = res;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
            }
        }
        if !accepted {
            for ((l, g), c) in lambda.iter_mut().zip(&goal).zip(&current) {
                *l += g.ln() - c.max(f64::MIN_POSITIVE).ln();
            }
            normalize(&mut lambda);
            current = induced_inclusion(&lambda, m);
            residual = max_residual(&goal, &current);
        }
    }

    let mut full = vec![f64::NEG_INFINITY; target.len()];
    for (k, &p) in target.iter().enumerate() {
        if p >= 1.0 {
            full[k] = f64::INFINITY;
        }
    }
    for (&k, &l) in free_units.iter().zip(&lambda) {
        full[k] = l;
    }
    let mut params = CpsParameters::from_lambda(&full, n)?;
    params.target_pi = pi.clone();
    Ok(params)
}

/// Draws a sample unit by unit; unit `k` enters with probability
/// `w_k e_{r-1}(w_{k+1..}) / e_r(w_k..)` where `r` is the number still needed.
pub fn cps_sample<R: Rng + ?Sized>(params: &CpsParameters, rng: &mut R) -> Sample {
    let mut chosen: Vec<usize> = params
        .status
        .iter()
        .enumerate()
        .filter_map(|(k, s)| (*s == UnitStatus::Certain).then_some(k))
        .collect();
    let mut r = params.free_size();
    for (j, &k) in params.free_units.iter().enumerate() {
        if r == 0 {
            break;
        }
        let p = (params.free_lambda[j] + params.backward[j + 1][r - 1] - params.backward[j][r]).exp();
        if rng.random::<f64>() < p {
            chosen.push(k);
            r -= 1;
        }
    }
    chosen.sort_unstable();
    Sample::from_sorted_unchecked(params.population_size(), chosen)
}

/// Exact probability of a sample under the design.
pub fn cps_probability(sample: &Sample, params: &CpsParameters) -> Result<f64> {
    if sample.population_size() != params.population_size() {
        return Err(Error::LengthMismatch {
            expected: params.population_size(),
            found: sample.population_size(),
        });
    }
    if sample.size() != params.n {
        return Err(Error::invalid(format!(
            "sample has {} units, design size is {}",
            sample.size(),
            params.n
        )));
    }
    let mut log_weight = 0.0;
    let mut certain_seen = 0;
    for &k in sample.units() {
        match params.status[k] {
            UnitStatus::Excluded => return Ok(0.0),
            UnitStatus::Certain => certain_seen += 1,
            UnitStatus::Free(i) => log_weight += params.free_lambda[i],
        }
    }
    if certain_seen != params.certain {
        return Ok(0.0);
    }
    Ok((log_weight - params.backward[0][params.free_size()]).exp())
}

/// `N x N` joint inclusion probabilities, diagonal `pi_k`.
pub fn cps_joint_inclusion(params: &CpsParameters) -> DMatrix<f64> {
    let big_n = params.population_size();
    let free_joint = induced_joint_inclusion(&params.free_lambda, params.free_size());
    let pi = params.inclusion_probabilities();
    let mut joint = DMatrix::zeros(big_n, big_n);
    for k in 0..big_n {
        for l in 0..big_n {
            joint[(k, l)] = match (params.status[k], params.status[l]) {
                (UnitStatus::Excluded, _) | (_, UnitStatus::Excluded) => 0.0,
                (UnitStatus::Certain, _) => pi[l],
                (_, UnitStatus::Certain) => pi[k],
                (UnitStatus::Free(i), UnitStatus::Free(j)) => free_joint[(i, j)],
            };
        }
    }
    joint
}
