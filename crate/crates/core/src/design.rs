//! Designs prepared against a frame, ready for repeated drawing.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basic::{
    bernoulli_sample, neyman_allocation, optimal_inclusion_probabilities, poisson_sample,
    proportional_allocation, srs_sample, stratified_srs_sample, Allocation, Dispersion, Lattice,
    SystematicGrid,
};
use crate::cps::{cps_joint_inclusion, cps_sample, solve_lambda, CpsParameters, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::cube::{cube_sample, BalanceNorm, BalancingProblem};
use crate::error::{Error, Result};
use crate::frame::{AuxSelector, PopulationFrame, Strata};
use crate::replicate::{DesignRng, Sampler};
use crate::sample::{InclusionProbabilities, Sample};
use crate::spatial::{
    grts_sample, local_cube_sample, local_pivotal_sample, mahalanobis_context,
    sequential_pivotal_sample, DistanceContext,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Bernoulli,
    Poisson,
    Srs,
    Stratified,
    Systematic,
    Cps,
    Cube,
    SequentialPivotal,
    LocalPivotal,
    Grts,
    LocalCube,
}

impl DesignKind {
    pub const ALL: [DesignKind; 11] = [
        DesignKind::Bernoulli,
        DesignKind::Poisson,
        DesignKind::Srs,
        DesignKind::Stratified,
        DesignKind::Systematic,
        DesignKind::Cps,
        DesignKind::Cube,
        DesignKind::SequentialPivotal,
        DesignKind::LocalPivotal,
        DesignKind::Grts,
        DesignKind::LocalCube,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Bernoulli => "bernoulli",
            DesignKind::Poisson => "poisson",
            DesignKind::Srs => "srs",
            DesignKind::Stratified => "stratified",
            DesignKind::Systematic => "systematic",
            DesignKind::Cps => "cps",
            DesignKind::Cube => "cube",
            DesignKind::SequentialPivotal => "sequential_pivotal",
            DesignKind::LocalPivotal => "local_pivotal",
            DesignKind::Grts => "grts",
            DesignKind::LocalCube => "local_cube",
        }
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        DesignKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = DesignKind::ALL.iter().map(|k| k.name()).collect();
                Error::invalid(format!("unknown design {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Where the inclusion probabilities come from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PiSource {
    /// `n / N` for every unit.
    #[default]
    Equal,
    /// Proportional to a nonnegative column, capped at 1 (`prop:<column>`).
    Proportional(String),
    /// Proportional to the model dispersion of the frame, capped at 1.
    Sigma,
    /// Taken as given from a column (`column:<name>`).
    Column(String),
}

impl FromStr for PiSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "equal" {
            Ok(PiSource::Equal)
        } else if s == "sigma" {
            Ok(PiSource::Sigma)
        } else if let Some(c) = s.strip_prefix("prop:") {
            Ok(PiSource::Proportional(c.to_string()))
        } else if let Some(c) = s.strip_prefix("column:") {
            Ok(PiSource::Column(c.to_string()))
        } else {
            Err(Error::invalid(format!(
                "unknown inclusion probability source {s:?}; expected equal, sigma, prop:<column> or column:<column>"
            )))
        }
    }
}

impl TryFrom<String> for PiSource {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PiSource> for String {
    fn from(p: PiSource) -> String {
        match p {
            PiSource::Equal => "equal".into(),
            PiSource::Sigma => "sigma".into(),
            PiSource::Proportional(c) => format!("prop:{c}"),
            PiSource::Column(c) => format!("column:{c}"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationRule {
    #[default]
    Proportional,
    /// Uses the frame's per-unit dispersions.
    Neyman,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadMetric {
    /// Euclidean distance on the frame coordinates.
    #[default]
    Coords,
    /// Mahalanobis distance on the auxiliary variables.
    Mahalanobis,
}

/// Everything needed to prepare a design on a frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub design: DesignKind,
    /// Sample size, or expected sample size for Bernoulli and Poisson.
    pub n: Option<usize>,
    pub pi: PiSource,
    /// Balancing variables for the cube designs; empty means `pi` alone.
    pub aux: Vec<AuxSelector>,
    pub allocation: AllocationRule,
    pub metric: SpreadMetric,
    pub norm: BalanceNorm,
    /// Tolerance reported against in cube balance checks.
    pub tolerance: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            design: DesignKind::Srs,
            n: None,
            pi: PiSource::Equal,
            aux: Vec::new(),
            allocation: AllocationRule::Proportional,
            metric: SpreadMetric::Coords,
            norm: BalanceNorm::Linf,
            tolerance: 0.02,
        }
    }
}

impl DesignConfig {
    pub fn new(design: DesignKind, n: usize) -> Self {
        Self {
            design,
            n: Some(n),
            ..Self::default()
        }
    }

    pub fn with_aux(mut self, aux: Vec<AuxSelector>) -> Self {
        self.aux = aux;
        self
    }

    pub fn with_pi(mut self, pi: PiSource) -> Self {
        self.pi = pi;
        self
    }

    fn require_n(&self) -> Result<usize> {
        self.n
            .ok_or_else(|| Error::invalid(format!("design {} needs a sample size", self.design)))
    }

    pub fn inclusion_probabilities(&self, frame: &PopulationFrame) -> Result<InclusionProbabilities> {
        let big_n = frame.size();
        match &self.pi {
            PiSource::Equal => InclusionProbabilities::uniform(big_n, self.require_n()?),
            PiSource::Sigma => optimal_inclusion_probabilities(frame.require_sigma()?, self.require_n()?),
            PiSource::Proportional(col) => {
                let values = frame.column(col).ok_or_else(|| Error::MissingColumn(col.clone()))?;
                optimal_inclusion_probabilities(&values, self.require_n()?)
            }
            PiSource::Column(col) => {
                InclusionProbabilities::new(frame.column(col).ok_or_else(|| Error::MissingColumn(col.clone()))?)
            }
        }
    }

    fn fixed_n(&self, pi: &InclusionProbabilities) -> Result<usize> {
        let n = pi.integer_size().ok_or_else(|| {
            Error::invalid(format!(
                "design {} needs inclusion probabilities with an integer sum, found {}",
                self.design,
                pi.expected_size()
            ))
        })?;
        if let Some(requested) = self.n {
            if requested != n {
                return Err(Error::invalid(format!(
                    "inclusion probabilities sum to {n}, but the sample size is {requested}"
                )));
            }
        }
        Ok(n)
    }

    fn context(&self, frame: &PopulationFrame) -> Result<DistanceContext> {
        match self.metric {
            SpreadMetric::Coords => DistanceContext::from_coords(frame),
            SpreadMetric::Mahalanobis => mahalanobis_context(frame),
        }
    }

    fn balancing(&self, frame: &PopulationFrame, pi: InclusionProbabilities) -> Result<BalancingProblem> {
        let aux = if self.aux.is_empty() {
            vec![AuxSelector::Pi]
        } else {
            self.aux.clone()
        };
        Ok(BalancingProblem::from_frame(frame, pi, &aux)?.with_norm(self.norm, self.tolerance))
    }

    /// Resolves the configuration against `frame`.
    pub fn prepare(&self, frame: &PopulationFrame) -> Result<Design> {
        let big_n = frame.size();
        let equal_only = |what: &str| -> Result<()> {
            if self.pi != PiSource::Equal {
                return Err(Error::invalid(format!("{what} uses equal inclusion probabilities")));
            }
            Ok(())
        };
        Ok(match self.design {
            DesignKind::Bernoulli => {
                equal_only("Bernoulli sampling")?;
                let n = self.require_n()?;
                if n > big_n {
                    return Err(Error::invalid(format!("expected size {n} exceeds population size {big_n}")));
                }
                Design::Bernoulli {
                    population: big_n,
                    pi: n as f64 / big_n as f64,
                }
            }
            DesignKind::Poisson => Design::Poisson(self.inclusion_probabilities(frame)?),
            DesignKind::Srs => {
                equal_only("simple random sampling")?;
                let n = self.require_n()?;
                if n > big_n {
                    return Err(Error::invalid(format!("sample size {n} exceeds population size {big_n}")));
                }
                Design::Srs { population: big_n, n }
            }
            DesignKind::Stratified => {
                equal_only("stratified sampling")?;
                let strata = frame.require_strata()?.clone();
                let n = self.require_n()?;
                let allocation = match self.allocation {
                    AllocationRule::Proportional => proportional_allocation(&strata, n)?,
                    AllocationRule::Neyman => {
                        neyman_allocation(&strata, n, Dispersion::PerUnit(frame.require_sigma()?))?
                    }
                };
                Design::Stratified { strata, allocation }
            }
            DesignKind::Systematic => {
                equal_only("systematic sampling")?;
                Design::Systematic(SystematicGrid::new(Lattice::detect(frame)?, self.require_n()?)?)
            }
            DesignKind::Cps => {
                let pi = self.inclusion_probabilities(frame)?;
                let n = self.fixed_n(&pi)?;
                Design::Cps(solve_lambda(&pi, n, DEFAULT_TOL, DEFAULT_MAX_ITER)?)
            }
            DesignKind::Cube => Design::Cube(self.balancing(frame, self.inclusion_probabilities(frame)?)?),
            DesignKind::SequentialPivotal => Design::SequentialPivotal(self.inclusion_probabilities(frame)?),
            DesignKind::LocalPivotal => Design::LocalPivotal {
                pi: self.inclusion_probabilities(frame)?,
                ctx: self.context(frame)?,
            },
            DesignKind::Grts => {
                let pi = self.inclusion_probabilities(frame)?;
                self.fixed_n(&pi)?;
                Design::Grts {
                    pi,
                    coords: frame.require_coords()?.clone(),
                }
            }
            DesignKind::LocalCube => Design::LocalCube {
                problem: self.balancing(frame, self.inclusion_probabilities(frame)?)?,
                ctx: self.context(frame)?,
            },
        })
    }
}

/// A design with all parameters resolved.
#[derive(Clone, Debug)]
pub enum Design {
    Bernoulli { population: usize, pi: f64 },
    Poisson(InclusionProbabilities),
    Srs { population: usize, n: usize },
    Stratified { strata: Strata, allocation: Allocation },
    Systematic(SystematicGrid),
    Cps(CpsParameters),
    Cube(BalancingProblem),
    SequentialPivotal(InclusionProbabilities),
    LocalPivotal { pi: InclusionProbabilities, ctx: DistanceContext },
    Grts { pi: InclusionProbabilities, coords: DMatrix<f64> },
    LocalCube { problem: BalancingProblem, ctx: DistanceContext },
}

impl Design {
    pub fn kind(&self) -> DesignKind {
        match self {
            Design::Bernoulli { .. } => DesignKind::Bernoulli,
            Design::Poisson(_) => DesignKind::Poisson,
            Design::Srs { .. } => DesignKind::Srs,
            Design::Stratified { .. } => DesignKind::Stratified,
            Design::Systematic(_) => DesignKind::Systematic,
            Design::Cps(_) => DesignKind::Cps,
            Design::Cube(_) => DesignKind::Cube,
            Design::SequentialPivotal(_) => DesignKind::SequentialPivotal,
            Design::LocalPivotal { .. } => DesignKind::LocalPivotal,
            Design::Grts { .. } => DesignKind::Grts,
            Design::LocalCube { .. } => DesignKind::LocalCube,
        }
    }

    pub fn population_size(&self) -> usize {
        match self {
            Design::Bernoulli { population, .. } | Design::Srs { population, .. } => *population,
            Design::Poisson(pi) | Design::SequentialPivotal(pi) => pi.len(),
            Design::Stratified { strata, .. } => strata.assignment().len(),
            Design::Systematic(g) => {
                let (nx, ny) = g.lattice().shape();
                nx * ny
            }
            Design::Cps(p) => p.population_size(),
            Design::Cube(p) | Design::LocalCube { problem: p, .. } => p.population_size(),
            Design::LocalPivotal { pi, .. } | Design::Grts { pi, .. } => pi.len(),
        }
    }

    pub fn inclusion_probabilities(&self) -> InclusionProbabilities {
        let uniform = |population: usize, p: f64| InclusionProbabilities::new(vec![p; population]);
        match self {
            Design::Bernoulli { population, pi } => uniform(*population, *pi).expect("validated"),
            Design::Srs { population, n } => InclusionProbabilities::uniform(*population, *n).expect("validated"),
            Design::Stratified { strata, allocation } => {
                allocation.inclusion_probabilities(strata).expect("validated")
            }
            Design::Systematic(g) => {
                let population = self.population_size();
                uniform(population, g.sample_size() as f64 / population as f64).expect("validated")
            }
            Design::Cps(p) => p.target_pi().clone(),
            Design::Cube(p) | Design::LocalCube { problem: p, .. } => p.pi().clone(),
            Design::Poisson(pi)
            | Design::SequentialPivotal(pi)
            | Design::LocalPivotal { pi, .. }
            | Design::Grts { pi, .. } => pi.clone(),
        }
    }

    /// Sample size when every draw has the same size.
    pub fn fixed_size(&self) -> Option<usize> {
        match self {
            Design::Bernoulli { pi, population } => match *pi {
                0.0 => Some(0),
                1.0 => Some(*population),
                _ => None,
            },
            Design::Poisson(pi) => pi
                .as_slice()
                .iter()
                .all(|&p| p == 0.0 || p == 1.0)
                .then(|| pi.expected_size().round() as usize),
            Design::Srs { n, .. } => Some(*n),
            Design::Stratified { allocation, .. } => Some(allocation.total()),
            Design::Systematic(g) => Some(g.sample_size()),
            Design::Cps(p) => Some(p.sample_size()),
            Design::Cube(p) | Design::LocalCube { problem: p, .. } => {
                if p.fixes_size() {
                    p.pi().integer_size()
                } else {
                    None
                }
            }
            Design::SequentialPivotal(pi) | Design::LocalPivotal { pi, .. } | Design::Grts { pi, .. } => {
                pi.integer_size()
            }
        }
    }

    /// Joint inclusion probabilities for designs where they are known in closed form.
    pub fn joint_inclusion(&self) -> Result<DMatrix<f64>> {
        let big_n = self.population_size();
        match self {
            Design::Bernoulli { .. } | Design::Poisson(_) => {
                let pi = self.inclusion_probabilities();
                let mut joint = DMatrix::from_fn(big_n, big_n, |k, l| pi[k] * pi[l]);
                for k in 0..big_n {
                    joint[(k, k)] = pi[k];
                }
                Ok(joint)
            }
            Design::Srs { population, n } => Ok(srs_joint(*population, |_| 0, &[(*population, *n)])),
            Design::Stratified { strata, allocation } => {
                let sizes: Vec<(usize, usize)> = strata.sizes().into_iter().zip(allocation.sizes.iter().copied()).collect();
                let assignment = strata.assignment();
                Ok(srs_joint(big_n, |k| assignment[k], &sizes))
            }
            Design::Cps(p) => Ok(cps_joint_inclusion(p)),
            other => Err(Error::NoClosedForm(other.kind().name())),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Sample> {
        match self {
            Design::Bernoulli { population, pi } => bernoulli_sample(*population, *pi, rng),
            Design::Poisson(pi) => Ok(poisson_sample(pi, rng)),
            Design::Srs { population, n } => srs_sample(*population, *n, rng),
            Design::Stratified { strata, allocation } => stratified_srs_sample(strata, allocation, rng),
            Design::Systematic(g) => g.draw(rng),
            Design::Cps(p) => Ok(cps_sample(p, rng)),
            Design::Cube(p) => cube_sample(p, rng).map(|(s, _)| s),
            Design::SequentialPivotal(pi) => Ok(sequential_pivotal_sample(pi, rng)),
            Design::LocalPivotal { pi, ctx } => local_pivotal_sample(pi, ctx, rng),
            Design::Grts { pi, coords } => grts_sample(coords, pi, rng),
            Design::LocalCube { problem, ctx } => local_cube_sample(problem, ctx, rng),
        }
    }
}

/// Joint probabilities of independent SRS within groups `group(k)` with `(N_h, n_h)` in `sizes`.
fn srs_joint(big_n: usize, group: impl Fn(usize) -> usize, sizes: &[(usize, usize)]) -> DMatrix<f64> {
    let first: Vec<f64> = sizes.iter().map(|&(bn, n)| n as f64 / bn as f64).collect();
    let pair: Vec<f64> = sizes
        .iter()
        .map(|&(bn, n)| {
            if bn < 2 {
                0.0
            } else {
                (n * n.saturating_sub(1)) as f64 / (bn * (bn - 1)) as f64
            }
        })
        .collect();
    DMatrix::from_fn(big_n, big_n, |k, l| {
        let (g, h) = (group(k), group(l));
        if k == l {
            first[g]
        } else if g == h {
            pair[g]
        } else {
            first[g] * first[h]
        }
    })
}

impl Sampler for Design {
    fn draw(&self, rng: &mut DesignRng) -> Result<Sample> {
        Design::draw(self, rng)
    }
}
