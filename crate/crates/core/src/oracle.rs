//! Exact design distributions for tiny populations, and empirical ones for
//! designs without a closed-form `p(s)`.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use nalgebra::DMatrix;

use crate::cps::cps_probability;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::replicate::{fold_replicates, Execution, Sampler};
use crate::sample::Sample;

/// Largest population that can be enumerated.
pub const MAX_ENUMERATION_UNITS: usize = 20;

/// An explicit list of samples with their probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct EnumeratedDesign {
    population: usize,
    support: Vec<(Sample, f64)>,
    fixed_size: Option<usize>,
    replications: Option<usize>,
}

impl EnumeratedDesign {
    /// Samples are put in lexicographic order of their indicator strings.
    /// Probabilities must be nonnegative and sum to one within `1e-12`.
    pub fn new(population: usize, mut support: Vec<(Sample, f64)>) -> Result<Self> {
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        if support.iter().any(|(_, p)| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("sample probabilities must be nonnegative"));
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("sample probabilities sum to {total}, not 1")));
        }
        if let Some((s, _)) = support.iter().find(|(s, _)| s.population_size() != population) {
            return Err(Error::LengthMismatch {
                expected: population,
                found: s.population_size(),
            });
        }
        support.sort_by_key(|(s, _)| s.indicator_string());
        if support.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("support contains a sample twice"));
        }
        let fixed_size = match support.first() {
            Some((s, _)) if support.iter().all(|(t, _)| t.size() == s.size()) => Some(s.size()),
            _ => None,
        };
        Ok(Self {
            population,
            support,
            fixed_size,
            replications: None,
        })
    }

    pub fn population_size(&self) -> usize {
        self.population
    }

    pub fn support(&self) -> &[(Sample, f64)] {
        &self.support
    }

    /// Common size of every sample in the support, if there is one.
    pub fn fixed_size(&self) -> Option<usize> {
        self.fixed_size
    }

    /// Number of replications behind an empirical design.
    pub fn replications(&self) -> Option<usize> {
        self.replications
    }

    pub fn probability(&self, sample: &Sample) -> f64 {
        self.support
            .binary_search_by_key(&sample.indicator_string(), |(s, _)| s.indicator_string())
            .map_or(0.0, |i| self.support[i].1)
    }

    /// `sum_s p(s) f(s)`.
    pub fn expectation<F: FnMut(&Sample) -> f64>(&self, mut f: F) -> f64 {
        self.support.iter().map(|(s, p)| p * f(s)).sum()
    }

    /// Fallible version of [`expectation`](Self::expectation).
    pub fn try_expectation<F: FnMut(&Sample) -> Result<f64>>(&self, mut f: F) -> Result<f64> {
        let mut total = 0.0;
        for (s, p) in &self.support {
            total += p * f(s)?;
        }
        Ok(total)
    }

    pub fn inclusion_probabilities(&self) -> Vec<f64> {
        let mut pi = vec![0.0; self.population];
        for (s, p) in &self.support {
            for &k in s.units() {
                pi[k] += p;
            }
        }
        pi
    }

    /// `N x N` joint inclusion probabilities with `pi_k` on the diagonal.
    pub fn joint_inclusion(&self) -> DMatrix<f64> {
        let mut joint = DMatrix::zeros(self.population, self.population);
        for (s, p) in &self.support {
            for &k in s.units() {
                for &l in s.units() {
                    joint[(k, l)] += p;
                }
            }
        }
        joint
    }

    /// Writes `sample,probability` rows, the sample as an indicator string.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["sample", "probability"])?;
        for (s, p) in &self.support {
            w.write_record([s.indicator_string(), format!("{p:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Total variation distance `0.5 sum_s |p(s) - q(s)|`.
    pub fn total_variation(&self, other: &EnumeratedDesign) -> f64 {
        let mut diff: HashMap<&Sample, f64> = HashMap::new();
        for (s, p) in &self.support {
            *diff.entry(s).or_default() += p;
        }
        for (s, q) in &other.support {
            *diff.entry(s).or_default() -= q;
        }
        0.5 * diff.values().map(|d| d.abs()).sum::<f64>()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

type ProbabilityFn<'a> = Box<dyn Fn(&Sample) -> Result<f64> + 'a>;

/// Exact distribution of a design with a closed-form `p(s)`: Bernoulli,
/// Poisson, simple random, stratified simple random and conditional Poisson.
pub fn enumerate_design(design: &Design) -> Result<EnumeratedDesign> {
    let big_n = design.population_size();
    if big_n > MAX_ENUMERATION_UNITS {
        return Err(Error::TooLarge(big_n));
    }
    let probability: ProbabilityFn<'_> = match design {
        Design::Bernoulli { .. } | Design::Poisson(_) => {
            let pi = design.inclusion_probabilities();
            Box::new(move |s: &Sample| {
                Ok((0..big_n)
                    .map(|k| if s.contains(k) { pi[k] } else { 1.0 - pi[k] })
                    .product())
            })
        }
        Design::Srs { population, n } => {
            let (population, n) = (*population, *n);
            let p = 1.0 / binomial(population, n);
            Box::new(move |s: &Sample| Ok(if s.size() == n { p } else { 0.0 }))
        }
        Design::Stratified { strata, allocation } => {
            let sizes = strata.sizes();
            let p: f64 = sizes
                .iter()
                .zip(&allocation.sizes)
                .map(|(&bn, &n)| 1.0 / binomial(bn, n))
                .product();
            let assignment = strata.assignment().to_vec();
            let want = allocation.sizes.clone();
            Box::new(move |s: &Sample| {
                let mut got = vec![0; want.len()];
                for &k in s.units() {
                    got[assignment[k]] += 1;
                }
                Ok(if got == want { p } else { 0.0 })
            })
        }
        Design::Cps(params) => {
            let n = params.sample_size();
            Box::new(move |s: &Sample| {
                if s.size() == n {
                    cps_probability(s, params)
                } else {
                    Ok(0.0)
                }
            })
        }
        other => return Err(Error::NoClosedForm(other.kind().name())),
    };
    let mut support = Vec::new();
    // Unit 0 is the most significant bit, so increasing masks are in indicator order.
    for mask in 0u64..(1u64 << big_n) {
        let units: Vec<usize> = (0..big_n).filter(|&k| mask >> (big_n - 1 - k) & 1 == 1).collect();
        let s = Sample::from_sorted_unchecked(big_n, units);
        let p = probability(&s)?;
        if p > 0.0 {
            support.push((s, p));
        }
    }
    let total: f64 = support.iter().map(|(_, p)| p).sum();
    // Products of many factors drift from 1 by a few ulps.
    support.iter_mut().for_each(|(_, p)| *p /= total);
    EnumeratedDesign::new(big_n, support)
}

/// Frequency table of `replications` draws from `sampler`.
pub fn empirical_design<S: Sampler + ?Sized>(
    sampler: &S,
    population: usize,
    replications: usize,
    master_seed: u64,
    exec: Execution,
) -> Result<EnumeratedDesign> {
    if replications == 0 {
        return Err(Error::invalid("at least one replication is needed"));
    }
    let counts: Result<BTreeMap<Sample, usize>> = fold_replicates(
        replications,
        master_seed,
        exec,
        || Ok(BTreeMap::new()),
        |acc: &mut Result<BTreeMap<Sample, usize>>, _, rng| {
            if let Ok(map) = acc {
                match sampler.draw(rng) {
                    Ok(s) => *map.entry(s).or_insert(0) += 1,
                    Err(e) => *acc = Err(e),
                }
            }
        },
        |a, b| {
            let (mut a, b) = (a?, b?);
            for (s, c) in b {
                *a.entry(s).or_insert(0) += c;
            }
            Ok(a)
        },
    );
    let support = counts?
        .into_iter()
        .map(|(s, c)| (s, c as f64 / replications as f64))
        .collect();
    let mut design = EnumeratedDesign::new(population, support)?;
    design.replications = Some(replications);
    Ok(design)
}
