//! Design-based estimation of totals and their variances, the model-based
//! predictor, and anticipated variances under a linear superpopulation model.

use nalgebra::{DMatrix, DVector};

use crate::design::DesignKind;
use crate::error::{Error, Result};
use crate::oracle::EnumeratedDesign;
use crate::sample::{InclusionProbabilities, Sample};

/// Largest condition number accepted when fitting the weighted regression.
pub const MAX_CONDITION: f64 = 1e12;

fn check_y(y: &[f64], population: usize) -> Result<()> {
    if y.len() != population {
        return Err(Error::LengthMismatch {
            expected: population,
            found: y.len(),
        });
    }
    Ok(())
}

/// Expansion estimator `sum_{k in S} y_k / pi_k`.
pub fn nht_total(sample: &Sample, y: &[f64], pi: &InclusionProbabilities) -> Result<f64> {
    pi.check_len(sample.population_size())?;
    check_y(y, pi.len())?;
    let mut total = 0.0;
    for &k in sample.units() {
        if pi[k] <= 0.0 {
            return Err(Error::ZeroInclusion(k));
        }
        total += y[k] / pi[k];
    }
    Ok(total)
}

/// Joint inclusion probabilities with `Delta_kl = pi_kl - pi_k pi_l`.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondOrderStructure {
    joint: DMatrix<f64>,
    delta: DMatrix<f64>,
    fixed_size: bool,
}

impl SecondOrderStructure {
    /// `joint` must be symmetric with `pi_k` on the diagonal and
    /// `0 <= pi_kl <= min(pi_k, pi_l)`. A fixed-size flag is checked against
    /// `sum_{l != k} pi_kl = (n - 1) pi_k`.
    pub fn new(joint: DMatrix<f64>, fixed_size: bool) -> Result<Self> {
        let big_n = joint.nrows();
        if joint.ncols() != big_n {
            return Err(Error::invalid("joint inclusion matrix must be square"));
        }
        const TOL: f64 = 1e-9;
        for k in 0..big_n {
            let pk = joint[(k, k)];
            if !(-TOL..=1.0 + TOL).contains(&pk) {
                return Err(Error::invalid(format!("inclusion probability of unit {k} is {pk}")));
            }
            for l in 0..k {
                let (a, b) = (joint[(k, l)], joint[(l, k)]);
                if (a - b).abs() > TOL {
                    return Err(Error::invalid(format!("joint probabilities of ({k}, {l}) are not symmetric")));
                }
                if a < -TOL || a > pk.min(joint[(l, l)]) + TOL {
                    return Err(Error::invalid(format!("joint probability of ({k}, {l}) is {a}")));
                }
            }
        }
        if fixed_size {
            let n: f64 = joint.diagonal().sum();
            for k in 0..big_n {
                let row: f64 = joint.row(k).sum() - joint[(k, k)];
                if (row - (n - 1.0) * joint[(k, k)]).abs() > TOL {
                    return Err(Error::invalid(format!(
                        "design flagged as fixed size but row {k} of the joint probabilities sums to {row}, not {}",
                        (n - 1.0) * joint[(k, k)]
                    )));
                }
            }
        }
        let delta = DMatrix::from_fn(big_n, big_n, |k, l| {
            if k == l {
                joint[(k, k)] * (1.0 - joint[(k, k)])
            } else {
                joint[(k, l)] - joint[(k, k)] * joint[(l, l)]
            }
        });
        Ok(Self {
            joint,
            delta,
            fixed_size,
        })
    }

    pub fn from_enumerated(design: &EnumeratedDesign) -> Result<Self> {
        Self::new(design.joint_inclusion(), design.fixed_size().is_some())
    }

    pub fn joint(&self) -> &DMatrix<f64> {
        &self.joint
    }

    pub fn delta(&self) -> &DMatrix<f64> {
        &self.delta
    }

    pub fn fixed_size(&self) -> bool {
        self.fixed_size
    }

    pub fn population_size(&self) -> usize {
        self.joint.nrows()
    }

    pub fn inclusion_probabilities(&self) -> Vec<f64> {
        self.joint.diagonal().iter().copied().collect()
    }
}

/// Design variance of the expansion estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrueVariance {
    /// `sum_k sum_l y_k y_l Delta_kl / (pi_k pi_l)`.
    pub general: f64,
    /// `-1/2 sum_{k != l} (y_k/pi_k - y_l/pi_l)^2 Delta_kl`, for fixed-size designs.
    pub sen_yates_grundy: Option<f64>,
}

impl TrueVariance {
    pub fn value(&self) -> f64 {
        self.general
    }
}

/// Units with `pi_k = 0` are left out; their `y_k` cannot be estimated anyway.
pub fn true_variance_nht(structure: &SecondOrderStructure, y: &[f64]) -> Result<TrueVariance> {
    let big_n = structure.population_size();
    check_y(y, big_n)?;
    let pi = structure.inclusion_probabilities();
    let units: Vec<usize> = (0..big_n).filter(|&k| pi[k] > 0.0).collect();
    let ratio: Vec<f64> = (0..big_n).map(|k| if pi[k] > 0.0 { y[k] / pi[k] } else { 0.0 }).collect();
    let delta = structure.delta();
    let mut general = 0.0;
    for &k in &units {
        for &l in &units {
            general += ratio[k] * ratio[l] * delta[(k, l)];
        }
    }
    let sen_yates_grundy = structure.fixed_size.then(|| {
        let mut v = 0.0;
        for &k in &units {
            for &l in &units {
                if k != l {
                    let d = ratio[k] - ratio[l];
                    v += d * d * delta[(k, l)];
                }
            }
        }
        -0.5 * v
    });
    Ok(TrueVariance {
        general,
        sen_yates_grundy,
    })
}

/// Unbiased variance estimator from one sample; `joint` is `N x N` and only
/// the entries of sampled pairs are read.
///
/// With `fixed_size` the Sen-Yates-Grundy form is used, otherwise the general
/// Horvitz-Thompson form.
pub fn estimate_variance(
    sample: &Sample,
    y: &[f64],
    pi: &InclusionProbabilities,
    joint: &DMatrix<f64>,
    fixed_size: bool,
) -> Result<f64> {
    let big_n = sample.population_size();
    pi.check_len(big_n)?;
    check_y(y, big_n)?;
    if joint.nrows() != big_n || joint.ncols() != big_n {
        return Err(Error::LengthMismatch {
            expected: big_n,
            found: joint.nrows(),
        });
    }
    let units = sample.units();
    for &k in units {
        if pi[k] <= 0.0 {
            return Err(Error::ZeroInclusion(k));
        }
    }
    let mut v = 0.0;
    for (i, &k) in units.iter().enumerate() {
        let rk = y[k] / pi[k];
        if !fixed_size {
            v += rk * rk * (1.0 - pi[k]);
        }
        for &l in &units[i + 1..] {
            let pkl = joint[(k, l)];
            if pkl <= 0.0 {
                return Err(Error::ZeroJointInclusion(k, l));
            }
            let rl = y[l] / pi[l];
            let weight = (pkl - pi[k] * pi[l]) / pkl;
            // Each unordered pair stands for both orders.
            if fixed_size {
                v -= (rk - rl) * (rk - rl) * weight;
            } else {
                v += 2.0 * rk * rl * weight;
            }
        }
    }
    Ok(v)
}

/// Weighted least-squares coefficient `(sum x x^T / s^2)^-1 sum x y / s^2`
/// over the sampled units, by singular value decomposition.
pub fn wls_coefficients(sample: &Sample, x: &DMatrix<f64>, y: &[f64], sigma: &[f64]) -> Result<DVector<f64>> {
    let units = sample.units();
    let p = x.ncols();
    let mut a = DMatrix::zeros(units.len(), p);
    let mut b = DVector::zeros(units.len());
    for (i, &k) in units.iter().enumerate() {
        if sigma[k].is_nan() || sigma[k] <= 0.0 {
            return Err(Error::invalid(format!("unit {k} has dispersion {}, must be positive", sigma[k])));
        }
        for j in 0..p {
            a[(i, j)] = x[(k, j)] / sigma[k];
        }
        b[i] = y[k] / sigma[k];
    }
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if units.len() < p || smin <= 0.0 || smax / smin > MAX_CONDITION {
        return Err(Error::Numerical(
            "weighted regression on the sample is singular or ill-conditioned".into(),
        ));
    }
    svd.solve(&b, 0.0).map_err(|e| Error::Numerical(e.to_string()))
}

/// Best linear unbiased predictor `sum_{k in S} y_k + sum_{k not in S} x_k^T beta`.
pub fn blup_total(sample: &Sample, x: &DMatrix<f64>, y: &[f64], sigma: &[f64]) -> Result<f64> {
    let big_n = sample.population_size();
    check_y(y, big_n)?;
    check_y(sigma, big_n)?;
    if x.nrows() != big_n {
        return Err(Error::LengthMismatch {
            expected: big_n,
            found: x.nrows(),
        });
    }
    let beta = wls_coefficients(sample, x, y, sigma)?;
    Ok(y
        .iter()
        .enumerate()
        .map(|(k, &yk)| if sample.contains(k) { yk } else { (x.row(k) * &beta)[(0, 0)] })
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorStructure {
    Independent,
    Correlated,
}

/// Linear superpopulation model `y_k = x_k^T beta + e_k` with
/// `var(e_k) = sigma_k^2` and `cov(e_k, e_l) = sigma_k sigma_l rho_kl`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    beta: Vec<f64>,
    sigma: Vec<f64>,
    rho: Option<DMatrix<f64>>,
}

impl ModelSpec {
    pub fn independent(beta: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("dispersions must be finite and nonnegative"));
        }
        Ok(Self { beta, sigma, rho: None })
    }

    pub fn correlated(beta: Vec<f64>, sigma: Vec<f64>, rho: DMatrix<f64>) -> Result<Self> {
        let mut m = Self::independent(beta, sigma)?;
        let n = m.sigma.len();
        if rho.nrows() != n || rho.ncols() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: rho.nrows(),
            });
        }
        for k in 0..n {
            if (rho[(k, k)] - 1.0).abs() > 1e-12 {
                return Err(Error::invalid("correlation matrix must have a unit diagonal"));
            }
            for l in 0..n {
                if (rho[(k, l)] - rho[(l, k)]).abs() > 1e-12 || rho[(k, l)].abs() > 1.0 + 1e-12 {
                    return Err(Error::invalid("correlation matrix must be symmetric with entries in [-1, 1]"));
                }
            }
        }
        m.rho = Some(rho);
        Ok(m)
    }

    pub fn structure(&self) -> ErrorStructure {
        if self.rho.is_some() {
            ErrorStructure::Correlated
        } else {
            ErrorStructure::Independent
        }
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn rho(&self) -> Option<&DMatrix<f64>> {
        self.rho.as_ref()
    }
}

/// How the design expectation of the squared balance residual is evaluated.
#[derive(Clone, Copy, Debug)]
pub enum DesignExpectation<'a> {
    Enumerated(&'a EnumeratedDesign),
    /// Monte Carlo average over independent draws.
    Samples(&'a [Sample]),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnticipatedVariance {
    /// `E_p (sum_S x^T beta / pi - sum_U x^T beta)^2`.
    pub design_term: f64,
    /// Monte Carlo standard error of the design term; `None` when exact.
    pub design_term_se: Option<f64>,
    /// Error term: the Godambe-Joshi bound for independent errors.
    pub model_term: f64,
}

impl AnticipatedVariance {
    pub fn total(&self) -> f64 {
        self.design_term + self.model_term
    }
}

/// Anticipated variance of the expansion estimator.
///
/// For correlated errors `Delta` is needed: it comes from `structure` when
/// given, otherwise from an enumerated design.
pub fn anticipated_variance(
    design: DesignExpectation<'_>,
    structure: Option<&SecondOrderStructure>,
    x: &DMatrix<f64>,
    model: &ModelSpec,
    pi: &InclusionProbabilities,
) -> Result<AnticipatedVariance> {
    let big_n = pi.len();
    check_y(model.sigma(), big_n)?;
    if x.nrows() != big_n || x.ncols() != model.beta().len() {
        return Err(Error::invalid(format!(
            "auxiliary matrix is {}x{}, model expects {big_n}x{}",
            x.nrows(),
            x.ncols(),
            model.beta().len()
        )));
    }
    let beta = DVector::from_column_slice(model.beta());
    let mean: Vec<f64> = (0..big_n).map(|k| (x.row(k) * &beta)[(0, 0)]).collect();
    let population_total: f64 = mean.iter().sum();
    let residual = |s: &Sample| -> Result<f64> {
        let e = nht_total(s, &mean, pi)? - population_total;
        Ok(e * e)
    };
    let (design_term, design_term_se) = match design {
        DesignExpectation::Enumerated(d) => (d.try_expectation(residual)?, None),
        DesignExpectation::Samples(samples) => {
            if samples.is_empty() {
                return Err(Error::invalid("no samples for the Monte Carlo design term"));
            }
            let values: Vec<f64> = samples.iter().map(residual).collect::<Result<_>>()?;
            let r = values.len() as f64;
            let m = values.iter().sum::<f64>() / r;
            let se = if values.len() > 1 {
                (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (r - 1.0) / r).sqrt()
            } else {
                f64::NAN
            };
            (m, Some(se))
        }
    };
    let sigma = model.sigma();
    let model_term = match model.rho() {
        None => (0..big_n)
            .map(|k| {
                if pi[k] > 0.0 {
                    Ok((1.0 - pi[k]) * sigma[k] * sigma[k] / pi[k])
                } else if sigma[k] == 0.0 {
                    Ok(0.0)
                } else {
                    Err(Error::ZeroInclusion(k))
                }
            })
            .sum::<Result<f64>>()?,
        Some(rho) => {
            let owned;
            let structure = match (structure, design) {
                (Some(s), _) => s,
                (None, DesignExpectation::Enumerated(d)) => {
                    owned = SecondOrderStructure::from_enumerated(d)?;
                    &owned
                }
                (None, DesignExpectation::Samples(_)) => {
                    return Err(Error::invalid(
                        "correlated errors need the joint inclusion probabilities of the design",
                    ))
                }
            };
            if structure.population_size() != big_n {
                return Err(Error::LengthMismatch {
                    expected: big_n,
                    found: structure.population_size(),
                });
            }
            let delta = structure.delta();
            let mut v = 0.0;
            for k in 0..big_n {
                for l in 0..big_n {
                    let c = sigma[k] * sigma[l] * rho[(k, l)];
                    if c == 0.0 || delta[(k, l)] == 0.0 {
                        continue;
                    }
                    if pi[k] == 0.0 || pi[l] == 0.0 {
                        return Err(Error::ZeroInclusion(if pi[k] == 0.0 { k } else { l }));
                    }
                    v += delta[(k, l)] * c / (pi[k] * pi[l]);
                }
            }
            v
        }
    };
    Ok(AnticipatedVariance {
        design_term,
        design_term_se,
        model_term,
    })
}

/// Anticipated variance of a balanced design with `pi` proportional to
/// `sigma`: `N^2 [((N - n)/N) mean^2 / n - var / N]`, with the population
/// mean and variance (divisor `N`) of `sigma`.
pub fn avar_balanced_closed_form(sigma: &[f64], n: usize) -> Result<f64> {
    let big_n = sigma.len();
    if n == 0 || n > big_n {
        return Err(Error::invalid(format!("sample size {n} not in [1, {big_n}]")));
    }
    if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::invalid("dispersions must be finite and nonnegative"));
    }
    let nf = big_n as f64;
    let mean = sigma.iter().sum::<f64>() / nf;
    let var = sigma.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / nf;
    Ok(nf * nf * ((nf - n as f64) / nf * mean * mean / n as f64 - var / nf))
}

/// The six particular cases of the linear model that have a known optimal design.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelCase {
    /// `y = beta + e`, constant variance.
    CommonMean,
    /// `y = e`, constant variance.
    PureNoise,
    /// `y = x beta + e`, variance proportional to `x^2`.
    Ratio,
    /// `y = e`, variance proportional to `x^2`.
    ScaledNoise,
    /// `y = beta_h + e` in stratum `h`, constant variance.
    StratumMeans,
    /// `y = beta_h + e` in stratum `h`, variance `sigma_h^2`.
    StratumMeansHeteroscedastic,
}

impl ModelCase {
    pub const ALL: [ModelCase; 6] = [
        ModelCase::CommonMean,
        ModelCase::PureNoise,
        ModelCase::Ratio,
        ModelCase::ScaledNoise,
        ModelCase::StratumMeans,
        ModelCase::StratumMeansHeteroscedastic,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PiRule {
    /// `n / N`.
    Equal,
    /// Expected size over `N`.
    ExpectedSizeOverN,
    ProportionalToX,
    ProportionalToStratumSigma,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OptimalDesign {
    pub design: DesignKind,
    pub allocation: Option<crate::design::AllocationRule>,
    pub model_variance: &'static str,
    pub pi: PiRule,
}

/// Optimal design for each particular case of the model.
pub fn table1_check(case: ModelCase) -> OptimalDesign {
    use crate::design::AllocationRule;
    let (design, allocation, model_variance, pi) = match case {
        ModelCase::CommonMean => (DesignKind::Srs, None, "sigma^2", PiRule::Equal),
        ModelCase::PureNoise => (DesignKind::Bernoulli, None, "sigma^2", PiRule::ExpectedSizeOverN),
        ModelCase::Ratio => (DesignKind::Cps, None, "x_k^2 sigma^2", PiRule::ProportionalToX),
        ModelCase::ScaledNoise => (DesignKind::Poisson, None, "x_k^2 sigma^2", PiRule::ProportionalToX),
        ModelCase::StratumMeans => (
            DesignKind::Stratified,
            Some(AllocationRule::Proportional),
            "sigma^2",
            PiRule::Equal,
        ),
        ModelCase::StratumMeansHeteroscedastic => (
            DesignKind::Stratified,
            Some(AllocationRule::Neyman),
            "sigma_h^2",
            PiRule::ProportionalToStratumSigma,
        ),
    };
    OptimalDesign {
        design,
        allocation,
        model_variance,
        pi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Design;
    use crate::oracle::enumerate_design;

    fn srs42() -> (EnumeratedDesign, InclusionProbabilities) {
        (
            enumerate_design(&Design::Srs { population: 4, n: 2 }).unwrap(),
            InclusionProbabilities::uniform(4, 2).unwrap(),
        )
    }

    #[test]
    fn nht_basics() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let census = InclusionProbabilities::new(vec![1.0; 4]).unwrap();
        assert_eq!(nht_total(&Sample::census(4), &y, &census).unwrap(), 10.0);

        let (d, pi) = srs42();
        assert!((d.try_expectation(|s| nht_total(s, &y, &pi)).unwrap() - 10.0).abs() < 1e-12);

        let pi = InclusionProbabilities::new(vec![0.2, 0.4, 0.6, 0.8]).unwrap();
        let y: Vec<f64> = pi.as_slice().iter().map(|p| 3.0 * p).collect();
        let s = Sample::from_indices(4, vec![1, 3]).unwrap();
        assert!((nht_total(&s, &y, &pi).unwrap() - 6.0).abs() < 1e-12);

        let zero = InclusionProbabilities::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            nht_total(&Sample::census(2), &[1.0, 1.0], &zero),
            Err(Error::ZeroInclusion(0))
        ));
    }

    #[test]
    fn three_way_variance_agreement() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let (d, pi) = srs42();
        let so = SecondOrderStructure::from_enumerated(&d).unwrap();
        let v = true_variance_nht(&so, &y).unwrap();
        let enumerated = d.expectation(|s| (nht_total(s, &y, &pi).unwrap() - 10.0).powi(2));
        assert!((v.general - enumerated).abs() < 1e-9);
        assert!((v.sen_yates_grundy.unwrap() - enumerated).abs() < 1e-9);
        // N^2 (1 - n/N) S^2 / n with S^2 = 5/3.
        assert!((enumerated - 16.0 * 0.5 * (5.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_variance_is_diagonal() {
        let pi = InclusionProbabilities::new(vec![0.2, 0.5, 0.9]).unwrap();
        let y = [3.0, -1.0, 2.0];
        let d = enumerate_design(&Design::Poisson(pi.clone())).unwrap();
        let so = SecondOrderStructure::from_enumerated(&d).unwrap();
        assert!(!so.fixed_size());
        let v = true_variance_nht(&so, &y).unwrap();
        let direct: f64 = (0..3).map(|k| y[k] * y[k] * (1.0 - pi[k]) / pi[k]).sum();
        assert!((v.general - direct).abs() < 1e-12);
        assert!(v.sen_yates_grundy.is_none());
    }

    #[test]
    fn census_variance_zero() {
        let so = SecondOrderStructure::new(DMatrix::from_element(3, 3, 1.0), true).unwrap();
        let v = true_variance_nht(&so, &[1.0, 5.0, 2.0]).unwrap();
        assert_eq!(v.general, 0.0);
        assert_eq!(v.sen_yates_grundy, Some(0.0));
    }

    #[test]
    fn inconsistent_fixed_size_flag() {
        let d = enumerate_design(&Design::Bernoulli { population: 3, pi: 0.5 }).unwrap();
        assert!(SecondOrderStructure::new(d.joint_inclusion(), true).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.1, 0.5]);
        assert!(SecondOrderStructure::new(asym, false).is_err());
    }

    #[test]
    fn variance_estimators_are_unbiased() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let (d, pi) = srs42();
        let joint = d.joint_inclusion();
        let truth = true_variance_nht(&SecondOrderStructure::from_enumerated(&d).unwrap(), &y)
            .unwrap()
            .general;
        for fixed in [true, false] {
            let e = d
                .try_expectation(|s| estimate_variance(s, &y, &pi, &joint, fixed))
                .unwrap();
            assert!((e - truth).abs() < 1e-9, "fixed={fixed}");
        }
    }

    #[test]
    fn variance_estimator_edge_cases() {
        let pi = InclusionProbabilities::new(vec![0.25; 4]).unwrap();
        let joint = DMatrix::from_fn(4, 4, |k, l| if k == l { 0.25 } else { 0.0 });
        let one = Sample::from_indices(4, vec![2]).unwrap();
        assert_eq!(estimate_variance(&one, &[1.0; 4], &pi, &joint, true).unwrap(), 0.0);
        let two = Sample::from_indices(4, vec![0, 2]).unwrap();
        assert!(matches!(
            estimate_variance(&two, &[1.0; 4], &pi, &joint, true),
            Err(Error::ZeroJointInclusion(0, 2))
        ));
        let pi = InclusionProbabilities::new(vec![0.2, 0.4, 0.6, 0.8]).unwrap();
        let y: Vec<f64> = pi.as_slice().iter().map(|p| 7.0 * p).collect();
        let joint = DMatrix::from_fn(4, 4, |k, l| if k == l { pi[k] } else { 0.1 });
        let s = Sample::from_indices(4, vec![0, 1, 3]).unwrap();
        assert_eq!(estimate_variance(&s, &y, &pi, &joint, true).unwrap(), 0.0);
    }

    #[test]
    fn blup_cases() {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.5, 1.0, 1.5, 1.0, 2.0, 1.0, 3.5, 1.0, 4.0]);
        let sigma = [1.0, 2.0, 1.0, 0.5, 1.5];
        let y: Vec<f64> = (0..5).map(|k| 2.0 + 3.0 * x[(k, 1)]).collect();
        let total: f64 = y.iter().sum();
        let s = Sample::from_indices(5, vec![1, 3]).unwrap();
        assert!((blup_total(&s, &x, &y, &sigma).unwrap() - total).abs() < 1e-10);
        assert!((blup_total(&Sample::census(5), &x, &y, &sigma).unwrap() - total).abs() < 1e-12);
        let single = Sample::from_indices(5, vec![1]).unwrap();
        assert!(matches!(blup_total(&single, &x, &y, &sigma), Err(Error::Numerical(_))));
    }

    #[test]
    fn blup_equals_nht_on_optimal_balanced_sample() {
        // x_k = (sigma_k, sigma_k^2); pi proportional to sigma; the sample {2, 5}
        // is exactly balanced on x.
        let sigma = [1.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let total_sigma: f64 = sigma.iter().sum();
        let pi = InclusionProbabilities::new(sigma.iter().map(|s| 2.0 * s / total_sigma).collect()).unwrap();
        let x = DMatrix::from_fn(6, 2, |k, j| sigma[k].powi(j as i32 + 1));
        let s = Sample::from_indices(6, vec![2, 5]).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            assert!((nht_total(&s, &col, &pi).unwrap() - col.iter().sum::<f64>()).abs() < 1e-12);
        }
        for y in [[1.0, 7.0, 2.0, -3.0, 5.0, 0.5], [10.0, 2.0, 8.0, 8.0, 1.0, 4.0]] {
            let blup = blup_total(&s, &x, &y, &sigma).unwrap();
            let nht = nht_total(&s, &y, &pi).unwrap();
            assert!((blup - nht).abs() < 1e-9, "{blup} vs {nht}");
        }
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(avar_balanced_closed_form(&[2.0; 5], 5).unwrap(), 0.0);
        assert!((avar_balanced_closed_form(&[1.0; 100], 10).unwrap() - 900.0).abs() < 1e-9);
        assert!(avar_balanced_closed_form(&[1.0; 3], 0).is_err());
    }

    #[test]
    fn identity_correlation_matches_independent() {
        let pi = InclusionProbabilities::new(vec![0.5, 0.3, 0.7, 0.5]).unwrap();
        let d = enumerate_design(&Design::Poisson(pi.clone())).unwrap();
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let sigma = vec![1.0, 0.5, 2.0, 1.5];
        let ind = ModelSpec::independent(vec![2.0], sigma.clone()).unwrap();
        let cor = ModelSpec::correlated(vec![2.0], sigma, DMatrix::identity(4, 4)).unwrap();
        let a = anticipated_variance(DesignExpectation::Enumerated(&d), None, &x, &ind, &pi).unwrap();
        let b = anticipated_variance(DesignExpectation::Enumerated(&d), None, &x, &cor, &pi).unwrap();
        assert!((a.model_term - b.model_term).abs() < 1e-12);
        assert_eq!(a.design_term, b.design_term);
        assert!(a.design_term_se.is_none());
        let bad = DMatrix::from_element(4, 4, 0.5);
        assert!(ModelSpec::correlated(vec![2.0], vec![1.0; 4], bad).is_err());
    }

    #[test]
    fn monte_carlo_design_term_reports_error() {
        let pi = InclusionProbabilities::uniform(4, 2).unwrap();
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let model = ModelSpec::independent(vec![1.0], vec![1.0; 4]).unwrap();
        let samples: Vec<Sample> = [[0, 1], [2, 3], [0, 3], [1, 2]]
            .iter()
            .map(|u| Sample::from_indices(4, u.to_vec()).unwrap())
            .collect();
        let av = anticipated_variance(DesignExpectation::Samples(&samples), None, &x, &model, &pi).unwrap();
        assert!((av.design_term - 8.0).abs() < 1e-12);
        assert!(av.design_term_se.unwrap() > 0.0);
        assert!((av.model_term - 4.0).abs() < 1e-12);
    }

    #[test]
    fn table_rows() {
        let rows: Vec<OptimalDesign> = ModelCase::ALL.iter().map(|&c| table1_check(c)).collect();
        assert_eq!(rows[0].design, DesignKind::Srs);
        assert_eq!(rows[0].pi, PiRule::Equal);
        assert_eq!(rows[2].design, DesignKind::Cps);
        assert_eq!(rows[2].pi, PiRule::ProportionalToX);
        assert_eq!(rows[5].pi, PiRule::ProportionalToStratumSigma);
    }
}
