//! Balanced sampling with the cube method.
//!
//! The flight phase walks the inclusion vector `v` from `pi` to a point with
//! at most `p` fractional coordinates, moving only along directions in the
//! kernel of the balancing matrix so that `sum_k a_k v_k` stays equal to the
//! population totals. Each move is a two-point lottery whose mean is the
//! current vector. The landing phase resolves the last fractional units with
//! a lottery over their completions chosen by a linear program.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{AuxSelector, PopulationFrame};
use crate::sample::{InclusionProbabilities, Sample};

/// Coordinates closer than this to 0 or 1 are treated as resolved.
pub(crate) const RESOLVED_EPS: f64 = 1e-10;

/// Landing by linear program is used up to this many fractional units.
pub const LANDING_LP_MAX_UNITS: usize = 12;

/// Relative pivot threshold for detecting linearly dependent balancing variables.
const RANK_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalanceNorm {
    #[default]
    Linf,
    L2,
}

impl BalanceNorm {
    pub fn apply(self, v: &[f64]) -> f64 {
        match self {
            BalanceNorm::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            BalanceNorm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

/// Computes a nonzero vector in the kernel of a `rows x cols` matrix with `rows < cols`.
///
/// Gauss-Jordan elimination with partial pivoting; the returned vector is the
/// basis vector of the last non-pivot column.
pub(crate) fn kernel_vector(m: &mut [f64], rows: usize, cols: usize) -> Vec<f64> {
    debug_assert!(rows < cols && m.len() == rows * cols);
    let scale = m.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    let thresh = RANK_EPS * scale.max(f64::MIN_POSITIVE);
    let mut pivots: Vec<(usize, usize)> = Vec::with_capacity(rows);
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (best, val) = (r..rows)
            .map(|i| (i, m[i * cols + c].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= thresh {
            continue;
        }
        if best != r {
            for j in 0..cols {
                m.swap(r * cols + j, best * cols + j);
            }
        }
        let p = m[r * cols + c];
        for j in 0..cols {
            m[r * cols + j] /= p;
        }
        for i in 0..rows {
            if i == r {
                continue;
            }
            let f = m[i * cols + c];
            if f != 0.0 {
                for j in 0..cols {
                    m[i * cols + j] -= f * m[r * cols + j];
                }
            }
        }
        pivots.push((r, c));
        r += 1;
    }
    let mut is_pivot = vec![false; cols];
    for &(_, c) in &pivots {
        is_pivot[c] = true;
    }
    let free = (0..cols).rev().find(|&c| !is_pivot[c]).expect("rows < cols");
    let mut u = vec![0.0; cols];
    u[free] = 1.0;
    for &(row, c) in &pivots {
        u[c] = -m[row * cols + free];
    }
    u
}

/// Largest steps `(up, down)` such that `v + up u` and `v - down u` stay in `[0, 1]`.
pub fn step_lengths(v: &[f64], u: &[f64]) -> (f64, f64) {
    let mut up = f64::INFINITY;
    let mut down = f64::INFINITY;
    for (&vk, &uk) in v.iter().zip(u) {
        if uk > 0.0 {
            up = up.min((1.0 - vk) / uk);
            down = down.min(vk / uk);
        } else if uk < 0.0 {
            up = up.min(vk / -uk);
            down = down.min((1.0 - vk) / -uk);
        }
    }
    (up, down)
}

/// Applies the expectation-preserving lottery along `u` to the coordinates `v`:
/// `v + up u` with probability `down / (up + down)`, else `v - down u`.
pub(crate) fn random_step<R: Rng + ?Sized>(v: &mut [f64], u: &[f64], rng: &mut R) {
    let (up, down) = step_lengths(v, u);
    debug_assert!(up.is_finite() && down.is_finite(), "zero direction");
    let t = if rng.random::<f64>() * (up + down) < down {
        up
    } else {
        -down
    };
    for (vk, &uk) in v.iter_mut().zip(u) {
        *vk += t * uk;
        if *vk < RESOLVED_EPS {
            *vk = 0.0;
        } else if *vk > 1.0 - RESOLVED_EPS {
            *vk = 1.0;
        }
    }
}

pub(crate) fn is_resolved(x: f64) -> bool {
    x == 0.0 || x == 1.0
}

/// Balancing constraints `sum_{k in S} x_k / pi_k = sum_{k in U} x_k`.
#[derive(Clone, Debug)]
pub struct BalancingProblem {
    pi: InclusionProbabilities,
    aux: DMatrix<f64>,
    /// Columns `a_k = x_k / pi_k` for the retained variables, unit-major (`N x p`).
    a: DMatrix<f64>,
    kept: Vec<usize>,
    totals: Vec<f64>,
    fixes_size: bool,
    pub norm: BalanceNorm,
    pub tolerance: f64,
}

impl BalancingProblem {
    /// `aux` is `N x p`. Linearly dependent balancing variables are dropped
    /// with a warning; they are balanced whenever the others are.
    pub fn new(pi: InclusionProbabilities, aux: DMatrix<f64>) -> Result<Self> {
        pi.check_len(aux.nrows())?;
        if aux.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("auxiliary matrix has non-finite values"));
        }
        for k in 0..aux.nrows() {
            if pi[k] == 0.0 && aux.row(k).iter().any(|&x| x != 0.0) {
                return Err(Error::invalid(format!(
                    "unit {k} has zero inclusion probability but nonzero auxiliary values"
                )));
            }
        }
        let free: Vec<usize> = (0..pi.len()).filter(|&k| !is_resolved(pi[k])).collect();
        let kept = independent_columns(&aux, pi.as_slice(), &free);
        if kept.len() < aux.ncols() {
            log::warn!(
                "dropping {} linearly dependent balancing variable(s)",
                aux.ncols() - kept.len()
            );
        }
        let a = DMatrix::from_fn(aux.nrows(), kept.len(), |k, j| {
            if pi[k] > 0.0 {
                aux[(k, kept[j])] / pi[k]
            } else {
                0.0
            }
        });
        let totals = (0..aux.ncols()).map(|j| aux.column(j).sum()).collect();
        let fixes_size = spans_pi(&aux, pi.as_slice());
        Ok(Self {
            pi,
            aux,
            a,
            kept,
            totals,
            fixes_size,
            norm: BalanceNorm::default(),
            tolerance: f64::INFINITY,
        })
    }

    pub fn from_frame(
        frame: &PopulationFrame,
        pi: InclusionProbabilities,
        selectors: &[AuxSelector],
    ) -> Result<Self> {
        let aux = frame.balancing_matrix(selectors, &pi)?;
        Self::new(pi, aux)
    }

    pub fn with_norm(mut self, norm: BalanceNorm, tolerance: f64) -> Self {
        self.norm = norm;
        self.tolerance = tolerance;
        self
    }

    pub fn pi(&self) -> &InclusionProbabilities {
        &self.pi
    }

    pub fn aux(&self) -> &DMatrix<f64> {
        &self.aux
    }

    /// Number of balancing variables actually enforced.
    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    /// Whether the balancing variables fix the sample size (`pi` is in their span).
    pub fn fixes_size(&self) -> bool {
        self.fixes_size
    }

    pub fn population_size(&self) -> usize {
        self.pi.len()
    }

    /// `sum_k a_k v_k` over the enforced variables.
    pub fn balance_of(&self, v: &[f64]) -> Vec<f64> {
        (0..self.a.ncols())
            .map(|j| (0..v.len()).map(|k| self.a[(k, j)] * v[k]).sum())
            .collect()
    }

    pub(crate) fn a_row(&self, k: usize, cols: usize) -> impl Iterator<Item = f64> + '_ {
        (0..cols).map(move |j| self.a[(k, j)])
    }

    pub(crate) fn scaled_deviation_weights(&self) -> Vec<f64> {
        self.kept
            .iter()
            .map(|&j| {
                let t = self.totals[j];
                if t != 0.0 { 1.0 / t.abs() } else { 1.0 }
            })
            .collect()
    }
}

/// Indices of a maximal set of linearly independent columns of `aux / pi`
/// restricted to the `free` units, found by pivoted Gram-Schmidt.
fn independent_columns(aux: &DMatrix<f64>, pi: &[f64], free: &[usize]) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for j in 0..aux.ncols() {
        let mut col: Vec<f64> = free.iter().map(|&k| aux[(k, j)] / pi[k]).collect();
        let norm0 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = col.iter().zip(b).map(|(x, y)| x * y).sum();
                col.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 * norm0 && norm > RANK_EPS {
            col.iter_mut().for_each(|x| *x /= norm);
            basis.push(col);
            kept.push(j);
        }
    }
    kept
}

/// Whether `pi` is (numerically) a linear combination of the columns of `aux`.
fn spans_pi(aux: &DMatrix<f64>, pi: &[f64]) -> bool {
    if aux.ncols() == 0 {
        return false;
    }
    let target = nalgebra::DVector::from_column_slice(pi);
    let svd = aux.clone().svd(true, true);
    let Ok(beta) = svd.solve(&target, 1e-12) else {
        return false;
    };
    let resid = (aux * beta - &target).norm();
    resid <= 1e-9 * target.norm().max(1.0)
}

/// State of the cube method after the flight phase.
#[derive(Clone, Debug, PartialEq)]
pub struct FlightState {
    pub v: Vec<f64>,
    /// Units with fractional `v`, in processing order.
    pub free: Vec<usize>,
}

pub fn flight_phase<R: Rng + ?Sized>(problem: &BalancingProblem, rng: &mut R) -> FlightState {
    flight_phase_observed(problem, rng, &mut |_| {})
}

/// Flight phase calling `observe` with the inclusion vector after every step.
pub fn flight_phase_observed<R: Rng + ?Sized>(
    problem: &BalancingProblem,
    rng: &mut R,
    observe: &mut dyn FnMut(&[f64]),
) -> FlightState {
    let mut v = problem.pi.as_slice().to_vec();
    let mut order: Vec<usize> = (0..v.len()).filter(|&k| !is_resolved(v[k])).collect();
    order.shuffle(rng);
    let free = run_flight(problem, problem.rank(), &mut v, order, rng, observe);
    FlightState { v, free }
}

/// Fast flight: repeatedly moves the first `p + 1` unresolved units (in
/// `order`) along a kernel direction of their `p x (p + 1)` constraint block.
/// Returns the units still fractional, in order.
pub(crate) fn run_flight<R: Rng + ?Sized>(
    problem: &BalancingProblem,
    p: usize,
    v: &mut [f64],
    order: Vec<usize>,
    rng: &mut R,
    observe: &mut dyn FnMut(&[f64]),
) -> Vec<usize> {
    let width = p + 1;
    let mut window: Vec<usize> = Vec::with_capacity(width);
    let mut next = 0;
    let mut block = vec![0.0; p * width];
    let mut local = vec![0.0; width];
    loop {
        while window.len() < width && next < order.len() {
            if !is_resolved(v[order[next]]) {
                window.push(order[next]);
            }
            next += 1;
        }
        if window.len() < width {
            break;
        }
        for (c, &k) in window.iter().enumerate() {
            for (r, x) in problem.a_row(k, p).enumerate() {
                block[r * width + c] = x;
            }
        }
        let u = kernel_vector(&mut block, p, width);
        for (c, &k) in window.iter().enumerate() {
            local[c] = v[k];
        }
        random_step(&mut local, &u, rng);
        for (c, &k) in window.iter().enumerate() {
            v[k] = local[c];
        }
        window.retain(|&k| !is_resolved(v[k]));
        observe(v);
    }
    // Units never reached by the window are resolved already; the window holds the rest.
    let mut rest: Vec<usize> = window;
    rest.extend(order[next..].iter().copied().filter(|&k| !is_resolved(v[k])));
    rest
}

/// Resolves the fractional units left by the flight phase.
///
/// With at most [`LANDING_LP_MAX_UNITS`] fractional units, every completion is
/// enumerated and a linear program picks the lottery over completions that
/// matches the current expectations and minimises the expected squared
/// normalised balance deviation. When the balancing variables fix the sample
/// size, only completions of the right size are eligible. With more
/// fractional units, balancing variables are dropped one at a time (last
/// first) and the flight continues on the relaxed constraints.
pub fn landing_phase<R: Rng + ?Sized>(
    state: FlightState,
    problem: &BalancingProblem,
    rng: &mut R,
) -> Result<Sample> {
    let FlightState { mut v, mut free } = state;
    let mut p = problem.rank();
    while free.len() > LANDING_LP_MAX_UNITS {
        p -= 1;
        free = run_flight(problem, p, &mut v, free, rng, &mut |_| {});
    }
    if !free.is_empty() {
        let completion = landing_lottery(problem, &v, &free)?;
        let pick = sample_lottery(&completion, rng);
        for (i, &k) in free.iter().enumerate() {
            v[k] = if completion.outcomes[pick] >> i & 1 == 1 { 1.0 } else { 0.0 };
        }
    }
    Ok(Sample::from_unit_vector(&v))
}

/// Lottery over completions of the fractional units; bit `i` of an outcome is
/// the value assigned to `free[i]`.
#[derive(Clone, Debug)]
pub struct LandingLottery {
    pub outcomes: Vec<u32>,
    pub probabilities: Vec<f64>,
    pub costs: Vec<f64>,
}

impl LandingLottery {
    /// Expected value of each free unit's indicator under the lottery.
    pub fn expectations(&self, units: usize) -> Vec<f64> {
        (0..units)
            .map(|i| {
                self.outcomes
                    .iter()
                    .zip(&self.probabilities)
                    .filter(|(o, _)| *o >> i & 1 == 1)
                    .map(|(_, p)| p)
                    .sum()
            })
            .collect()
    }

    pub fn expected_cost(&self) -> f64 {
        self.costs.iter().zip(&self.probabilities).map(|(c, p)| c * p).sum()
    }
}

/// Solves the landing linear program on `free` (at most [`LANDING_LP_MAX_UNITS`] units).
pub fn landing_lottery(problem: &BalancingProblem, v: &[f64], free: &[usize]) -> Result<LandingLottery> {
    let f = free.len();
    if f > LANDING_LP_MAX_UNITS {
        return Err(Error::invalid("too many fractional units for the landing program"));
    }
    let p = problem.rank();
    let weights = problem.scaled_deviation_weights();
    let target_size = if problem.fixes_size() {
        let s: f64 = free.iter().map(|&k| v[k]).sum();
        ((s - s.round()).abs() < 1e-7).then_some(s.round() as u32)
    } else {
        None
    };
    let outcomes: Vec<u32> = (0u32..(1 << f))
        .filter(|o| target_size.is_none_or(|t| o.count_ones() == t))
        .collect();
    let costs: Vec<f64> = outcomes
        .iter()
        .map(|&o| {
            (0..p)
                .map(|j| {
                    let dev: f64 = free
                        .iter()
                        .enumerate()
                        .map(|(i, &k)| {
                            let s = (o >> i & 1) as f64;
                            problem.a[(k, j)] * (v[k] - s)
                        })
                        .sum();
                    (dev * weights[j]).powi(2)
                })
                .sum()
        })
        .collect();

    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = costs.iter().map(|&c| lp.add_var(c, (0.0, 1.0))).collect();
    for (i, &k) in free.iter().enumerate() {
        let terms: Vec<_> = outcomes
            .iter()
            .zip(&vars)
            .filter(|(o, _)| *o >> i & 1 == 1)
            .map(|(_, &var)| (var, 1.0))
            .collect();
        lp.add_constraint(terms.as_slice(), ComparisonOp::Eq, v[k]);
    }
    let all: Vec<_> = vars.iter().map(|&var| (var, 1.0)).collect();
    lp.add_constraint(all.as_slice(), ComparisonOp::Eq, 1.0);
    let solution = lp
        .solve()
        .map_err(|e| Error::Numerical(format!("landing program failed: {e}")))?;
    let mut probabilities: Vec<f64> = vars.iter().map(|&var| solution[var].max(0.0)).collect();
    let total: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|q| *q /= total);
    Ok(LandingLottery {
        outcomes,
        probabilities,
        costs,
    })
}

fn sample_lottery<R: Rng + ?Sized>(lottery: &LandingLottery, rng: &mut R) -> usize {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, &q) in lottery.probabilities.iter().enumerate() {
        acc += q;
        if u < acc {
            return i;
        }
    }
    lottery
        .probabilities
        .iter()
        .rposition(|&q| q > 0.0)
        .unwrap_or(0)
}

/// Balance deviations of a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct BalanceReport {
    /// `|X_j - X̂_j| / |X_j|` per variable (absolute deviation when `X_j = 0`).
    pub deviations: Vec<f64>,
    pub norm_value: f64,
    pub max_deviation: f64,
    pub sample_size: usize,
    pub within_tolerance: bool,
}

pub fn balance_check(
    sample: &Sample,
    pi: &InclusionProbabilities,
    aux: &DMatrix<f64>,
    norm: BalanceNorm,
    tolerance: f64,
) -> Result<BalanceReport> {
    pi.check_len(aux.nrows())?;
    if sample.population_size() != aux.nrows() {
        return Err(Error::LengthMismatch {
            expected: aux.nrows(),
            found: sample.population_size(),
        });
    }
    let mut deviations = Vec::with_capacity(aux.ncols());
    for j in 0..aux.ncols() {
        let total = aux.column(j).sum();
        let mut estimate = 0.0;
        for &k in sample.units() {
            if pi[k] == 0.0 {
                return Err(Error::ZeroInclusion(k));
            }
            estimate += aux[(k, j)] / pi[k];
        }
        let dev = (total - estimate).abs();
        deviations.push(if total != 0.0 { dev / total.abs() } else { dev });
    }
    let norm_value = norm.apply(&deviations);
    Ok(BalanceReport {
        max_deviation: deviations.iter().fold(0.0, |m: f64, &d| m.max(d)),
        norm_value,
        within_tolerance: norm_value <= tolerance,
        sample_size: sample.size(),
        deviations,
    })
}

/// Flight followed by landing, with the balance report of the result.
pub fn cube_sample<R: Rng + ?Sized>(
    problem: &BalancingProblem,
    rng: &mut R,
) -> Result<(Sample, BalanceReport)> {
    let state = flight_phase(problem, rng);
    let sample = landing_phase(state, problem, rng)?;
    let report = balance_check(&sample, &problem.pi, &problem.aux, problem.norm, problem.tolerance)?;
    Ok((sample, report))
}
