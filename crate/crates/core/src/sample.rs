use crate::error::{Error, Result};

/// Tolerance used when deciding whether an expected size is an integer.
pub const SIZE_TOLERANCE: f64 = 1e-9;

/// First-order inclusion probabilities `pi_k` of a design.
#[derive(Clone, Debug, PartialEq)]
pub struct InclusionProbabilities(Vec<f64>);

impl InclusionProbabilities {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if let Some((k, &p)) = pi
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0 || **p > 1.0)
        {
            return Err(Error::invalid(format!(
                "inclusion probability of unit {k} is {p}, outside [0, 1]"
            )));
        }
        Ok(Self(pi))
    }

    /// Equal probabilities `n / N`.
    pub fn uniform(population: usize, n: usize) -> Result<Self> {
        if population == 0 || n > population {
            return Err(Error::invalid(format!(
                "sample size {n} not in [0, {population}]"
            )));
        }
        Ok(Self(vec![n as f64 / population as f64; population]))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn expected_size(&self) -> f64 {
        self.0.iter().sum()
    }

    /// The expected size rounded to an integer, if it is one within [`SIZE_TOLERANCE`].
    pub fn integer_size(&self) -> Option<usize> {
        let s = self.expected_size();
        let r = s.round();
        ((s - r).abs() <= SIZE_TOLERANCE).then_some(r as usize)
    }

    pub(crate) fn check_len(&self, population: usize) -> Result<()> {
        if self.0.len() != population {
            return Err(Error::LengthMismatch {
                expected: population,
                found: self.0.len(),
            });
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for InclusionProbabilities {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// A sample drawn without replacement, stored as a sorted list of unit indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sample {
    population: usize,
    units: Vec<usize>,
}

impl Sample {
    /// Builds a sample from arbitrary unit indices. Duplicates are rejected.
    pub fn from_indices(population: usize, mut units: Vec<usize>) -> Result<Self> {
        units.sort_unstable();
        if units.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("sample contains a unit twice"));
        }
        if let Some(&k) = units.last() {
            if k >= population {
                return Err(Error::invalid(format!(
                    "unit index {k} outside population of {population}"
                )));
            }
        }
        Ok(Self { population, units })
    }

    pub fn from_indicator(indicator: &[bool]) -> Self {
        Self {
            population: indicator.len(),
            units: indicator
                .iter()
                .enumerate()
                .filter_map(|(k, &b)| b.then_some(k))
                .collect(),
        }
    }

    /// Rounds a vector of (near) 0/1 values into a sample.
    pub(crate) fn from_unit_vector(v: &[f64]) -> Self {
        Self {
            population: v.len(),
            units: v
                .iter()
                .enumerate()
                .filter_map(|(k, &x)| (x > 0.5).then_some(k))
                .collect(),
        }
    }

    pub(crate) fn from_sorted_unchecked(population: usize, units: Vec<usize>) -> Self {
        debug_assert!(units.windows(2).all(|w| w[0] < w[1]));
        Self { population, units }
    }

    pub fn census(population: usize) -> Self {
        Self {
            population,
            units: (0..population).collect(),
        }
    }

    pub fn empty(population: usize) -> Self {
        Self {
            population,
            units: Vec::new(),
        }
    }

    pub fn population_size(&self) -> usize {
        self.population
    }

    pub fn size(&self) -> usize {
        self.units.len()
    }

    pub fn units(&self) -> &[usize] {
        &self.units
    }

    pub fn contains(&self, k: usize) -> bool {
        self.units.binary_search(&k).is_ok()
    }

    pub fn indicator(&self) -> Vec<bool> {
        let mut ind = vec![false; self.population];
        for &k in &self.units {
            ind[k] = true;
        }
        ind
    }

    /// `0`/`1` string with one character per unit, unit 0 first.
    pub fn indicator_string(&self) -> String {
        self.indicator()
            .into_iter()
            .map(|b| if b { '1' } else { '0' })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inclusion_bounds() {
        assert!(InclusionProbabilities::new(vec![0.0, 1.0, 0.5]).is_ok());
        assert!(InclusionProbabilities::new(vec![1.1]).is_err());
        assert!(InclusionProbabilities::new(vec![f64::NAN]).is_err());
        let pi = InclusionProbabilities::uniform(1600, 50).unwrap();
        assert_eq!(pi[0], 0.03125);
        assert_eq!(pi.integer_size(), Some(50));
        assert_eq!(
            InclusionProbabilities::new(vec![0.5, 0.6]).unwrap().integer_size(),
            None
        );
    }

    #[test]
    fn sample_representations_agree() {
        let s = Sample::from_indices(5, vec![3, 0, 4]).unwrap();
        assert_eq!(s.units(), &[0, 3, 4]);
        assert_eq!(s.size(), 3);
        assert_eq!(s.indicator_string(), "10011");
        assert_eq!(Sample::from_indicator(&s.indicator()), s);
        assert!(Sample::from_indices(3, vec![1, 1]).is_err());
        assert!(Sample::from_indices(3, vec![3]).is_err());
    }
}
