//! Basic designs: Bernoulli, Poisson, simple random sampling, stratified
//! simple random sampling with proportional or Neyman allocation, model-optimal
//! inclusion probabilities and equal-probability systematic sampling on a lattice.


use rand::Rng;

use crate::error::{Error, Result};
use crate::frame::{PopulationFrame, Strata};
use crate::sample::{InclusionProbabilities, Sample};

pub fn bernoulli_sample<R: Rng + ?Sized>(population: usize, pi: f64, rng: &mut R) -> Result<Sample> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::invalid(format!("Bernoulli probability {pi} outside [0, 1]")));
    }
    let units = (0..population).filter(|_| rng.random::<f64>() < pi).collect();
    Ok(Sample::from_sorted_unchecked(population, units))
}

pub fn poisson_sample<R: Rng + ?Sized>(pi: &InclusionProbabilities, rng: &mut R) -> Sample {
    let units = pi
        .as_slice()
        .iter()
        .enumerate()
        .filter_map(|(k, &p)| (rng.random::<f64>() < p).then_some(k))
        .collect();
    Sample::from_sorted_unchecked(pi.len(), units)
}

/// Uniform draw of `n` distinct units by partial Fisher-Yates shuffling.
pub fn srs_sample<R: Rng + ?Sized>(population: usize, n: usize, rng: &mut R) -> Result<Sample> {
    Ok(Sample::from_sorted_unchecked(
        population,
        srs_indices(population, n, rng)?,
    ))
}

fn srs_indices<R: Rng + ?Sized>(population: usize, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n > population {
        return Err(Error::invalid(format!(
            "sample size {n} exceeds population size {population}"
        )));
    }
    let mut idx: Vec<usize> = (0..population).collect();
    for i in 0..n {
        let j = rng.random_range(i..population);
        idx.swap(i, j);
    }
    idx.truncate(n);
    idx.sort_unstable();
    Ok(idx)
}

/// Per-stratum sample sizes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Allocation {
    pub sizes: Vec<usize>,
    pub take_all: Vec<bool>,
}

impl Allocation {
    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn validate(&self, strata: &Strata) -> Result<()> {
        let sizes = strata.sizes();
        if self.sizes.len() != sizes.len() {
            return Err(Error::LengthMismatch {
                expected: sizes.len(),
                found: self.sizes.len(),
            });
        }
        for (h, (&nh, &big_nh)) in self.sizes.iter().zip(&sizes).enumerate() {
            if nh > big_nh {
                return Err(Error::invalid(format!(
                    "stratum {h}: sample size {nh} exceeds stratum size {big_nh}"
                )));
            }
        }
        Ok(())
    }

    /// `pi_k = n_h / N_h` for `k` in stratum `h`.
    pub fn inclusion_probabilities(&self, strata: &Strata) -> Result<InclusionProbabilities> {
        self.validate(strata)?;
        let sizes = strata.sizes();
        InclusionProbabilities::new(
            strata
                .assignment()
                .iter()
                .map(|&h| self.sizes[h] as f64 / sizes[h] as f64)
                .collect(),
        )
    }
}

/// Rounds continuous stratum sizes to integers summing to `n`.
///
/// Every stratum receives the floor or the ceiling of its continuous size, and
/// among those choices the one minimising `sum_h weight_h / n_h` is returned
/// (ties go to the lowest stratum index).
fn round_allocation(raw: &[f64], caps: &[usize], weights: &[f64], n: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = raw
        .iter()
        .zip(caps)
        .map(|(&r, &cap)| ((r + 1e-9).floor().max(0.0) as usize).min(cap))
        .collect();
    let assigned: usize = sizes.iter().sum();
    let gain = |h: usize, nh: usize| -> f64 {
        if weights[h] == 0.0 {
            0.0
        } else if nh == 0 {
            f64::INFINITY
        } else {
            weights[h] * (1.0 / nh as f64 - 1.0 / (nh + 1) as f64)
        }
    };
    for _ in assigned..n {
        let mut best: Option<(usize, f64)> = None;
        for h in 0..raw.len() {
            let room = sizes[h] < caps[h] && (sizes[h] as f64) < raw[h] - 1e-9;
            if !room {
                continue;
            }
            let g = gain(h, sizes[h]);
            if best.is_none_or(|(_, bg)| g > bg) {
                best = Some((h, g));
            }
        }
        // Floors of sizes summing to n always leave enough ceilings.
        let (h, _) = best.expect("rounding ran out of strata");
        sizes[h] += 1;
    }
    sizes
}

fn check_total(strata: &Strata, n: usize) -> Result<Vec<usize>> {
    let sizes = strata.sizes();
    let total: usize = sizes.iter().sum();
    if n > total {
        return Err(Error::invalid(format!(
            "sample size {n} exceeds population size {total}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::invalid("empty stratum"));
    }
    Ok(sizes)
}

pub fn proportional_allocation(strata: &Strata, n: usize) -> Result<Allocation> {
    let sizes = check_total(strata, n)?;
    let total: usize = sizes.iter().sum();
    let raw: Vec<f64> = sizes
        .iter()
        .map(|&nh| n as f64 * nh as f64 / total as f64)
        .collect();
    let weights: Vec<f64> = sizes.iter().map(|&nh| (nh * nh) as f64).collect();
    let alloc = round_allocation(&raw, &sizes, &weights, n);
    Ok(Allocation {
        take_all: alloc.iter().zip(&sizes).map(|(a, s)| a == s).collect(),
        sizes: alloc,
    })
}

/// Dispersion input for Neyman allocation.
#[derive(Clone, Copy, Debug)]
pub enum Dispersion<'a> {
    /// Standard deviation `V_h` per stratum.
    PerStratum(&'a [f64]),
    /// Study variable per unit; `V_h` is its within-stratum standard deviation.
    PerUnit(&'a [f64]),
}

/// Within-stratum standard deviations with divisor `N_h - 1`.
pub fn stratum_std_devs(strata: &Strata, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != strata.assignment().len() {
        return Err(Error::LengthMismatch {
            expected: strata.assignment().len(),
            found: y.len(),
        });
    }
    Ok(strata
        .members()
        .iter()
        .map(|m| {
            if m.len() < 2 {
                return 0.0;
            }
            let mean = m.iter().map(|&k| y[k]).sum::<f64>() / m.len() as f64;
            let ss: f64 = m.iter().map(|&k| (y[k] - mean).powi(2)).sum();
            (ss / (m.len() - 1) as f64).sqrt()
        })
        .collect())
}

/// Neyman allocation `n_h ∝ N_h V_h` with take-all strata.
///
/// Strata whose continuous size exceeds `N_h` are fully enumerated and the
/// allocation is recomputed on the others until no stratum overflows.
pub fn neyman_allocation(strata: &Strata, n: usize, dispersion: Dispersion<'_>) -> Result<Allocation> {
    let sizes = check_total(strata, n)?;
    let v = match dispersion {
        Dispersion::PerStratum(v) => {
            if v.len() != sizes.len() {
                return Err(Error::LengthMismatch {
                    expected: sizes.len(),
                    found: v.len(),
                });
            }
            v.to_vec()
        }
        Dispersion::PerUnit(y) => stratum_std_devs(strata, y)?,
    };
    if v.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::invalid("stratum dispersions must be finite and non-negative"));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Err(Error::invalid("stratum dispersions are all zero"));
    }

    let h_count = sizes.len();
    let mut take_all = vec![false; h_count];
    let raw = loop {
        let remaining = n - (0..h_count).filter(|&h| take_all[h]).map(|h| sizes[h]).sum::<usize>();
        let active: Vec<usize> = (0..h_count).filter(|&h| !take_all[h]).collect();
        let mut weight: Vec<f64> = active.iter().map(|&h| sizes[h] as f64 * v[h]).collect();
        if weight.iter().sum::<f64>() == 0.0 {
            // Only zero-dispersion strata are left: spread the rest proportionally.
            weight = active.iter().map(|&h| sizes[h] as f64).collect();
        }
        let wsum: f64 = weight.iter().sum();
        let mut raw = vec![0.0; h_count];
        let mut overflow = false;
        for (&h, &w) in active.iter().zip(&weight) {
            raw[h] = remaining as f64 * w / wsum;
            if raw[h] > sizes[h] as f64 + 1e-12 {
                take_all[h] = true;
                overflow = true;
            }
        }
        if !overflow {
            for h in 0..h_count {
                if take_all[h] {
                    raw[h] = sizes[h] as f64;
                }
            }
            break raw;
        }
    };
    let weights: Vec<f64> = (0..h_count)
        .map(|h| (sizes[h] as f64 * v[h]).powi(2))
        .collect();
    let alloc = round_allocation(&raw, &sizes, &weights, n);
    Ok(Allocation {
        take_all: (0..h_count).map(|h| take_all[h] || alloc[h] == sizes[h]).collect(),
        sizes: alloc,
    })
}

/// Stratified-SRS variance objective `sum_h N_h^2 V_h^2 (1/n_h - 1/N_h)`.
pub fn stratified_variance_objective(stratum_sizes: &[usize], v: &[f64], alloc: &[usize]) -> f64 {
    stratum_sizes
        .iter()
        .zip(v)
        .zip(alloc)
        .map(|((&big, &vh), &nh)| {
            let w = (big as f64 * vh).powi(2);
            if w == 0.0 {
                0.0
            } else if nh == 0 {
                f64::INFINITY
            } else {
                w * (1.0 / nh as f64 - 1.0 / big as f64)
            }
        })
        .sum()
}

pub fn stratified_srs_sample<R: Rng + ?Sized>(
    strata: &Strata,
    alloc: &Allocation,
    rng: &mut R,
) -> Result<Sample> {
    alloc.validate(strata)?;
    let mut units = Vec::with_capacity(alloc.total());
    for (members, &nh) in strata.members().iter().zip(&alloc.sizes) {
        for i in srs_indices(members.len(), nh, rng)? {
            units.push(members[i]);
        }
    }
    units.sort_unstable();
    Ok(Sample::from_sorted_unchecked(strata.assignment().len(), units))
}

/// Inclusion probabilities proportional to the model dispersion, capped at one.
///
/// Units whose probability would exceed one are set to one and the remaining
/// sample size is redistributed over the others until no value exceeds one.
pub fn optimal_inclusion_probabilities(sigma: &[f64], n: usize) -> Result<InclusionProbabilities> {
    if sigma.iter().any(|&s| !s.is_finite() || s < 0.0) {
        return Err(Error::invalid("dispersions must be finite and non-negative"));
    }
    if n > sigma.len() {
        return Err(Error::invalid(format!(
            "sample size {n} exceeds population size {}",
            sigma.len()
        )));
    }
    let positive = sigma.iter().filter(|&&s| s > 0.0).count();
    if n > positive {
        return Err(Error::invalid(format!(
            "sample size {n} exceeds the {positive} units with positive dispersion"
        )));
    }
    let mut capped = vec![false; sigma.len()];
    let mut pi = vec![0.0; sigma.len()];
    loop {
        let n_capped = capped.iter().filter(|&&c| c).count();
        let rest = (n - n_capped) as f64;
        let total: f64 = sigma
            .iter()
            .zip(&capped)
            .filter(|(_, &c)| !c)
            .map(|(s, _)| s)
            .sum();
        let mut changed = false;
        for k in 0..sigma.len() {
            if capped[k] {
                pi[k] = 1.0;
                continue;
            }
            pi[k] = if total > 0.0 { rest * sigma[k] / total } else { 0.0 };
            if pi[k] >= 1.0 {
                capped[k] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    InclusionProbabilities::new(pi)
}

/// A complete rectangular lattice of two-dimensional coordinates.
#[derive(Clone, Debug)]
pub struct Lattice {
    nx: usize,
    ny: usize,
    /// Unit index at lattice cell `(ix, iy)`, stored `ix * ny + iy`.
    cells: Vec<usize>,
}

impl Lattice {
    pub fn detect(frame: &PopulationFrame) -> Result<Self> {
        let coords = frame.require_coords()?;
        if coords.ncols() != 2 {
            return Err(Error::invalid("lattice designs need two-dimensional coordinates"));
        }
        let axis = |j: usize| -> Result<(f64, f64, usize)> {
            let mut vals: Vec<f64> = coords.column(j).iter().copied().collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            if vals.len() == 1 {
                return Ok((vals[0], 1.0, 1));
            }
            let step = vals[1] - vals[0];
            let tol = 1e-9 * step.abs().max(1.0);
            if vals
                .windows(2)
                .any(|w| ((w[1] - w[0]) - step).abs() > tol)
            {
                return Err(Error::invalid("coordinates are not a regular lattice"));
            }
            Ok((vals[0], step, vals.len()))
        };
        let (x0, dx, nx) = axis(0)?;
        let (y0, dy, ny) = axis(1)?;
        if nx * ny != frame.size() {
            return Err(Error::invalid("coordinates are not a complete lattice"));
        }
        let mut cells = vec![usize::MAX; nx * ny];
        for k in 0..frame.size() {
            let ix = ((coords[(k, 0)] - x0) / dx).round() as usize;
            let iy = ((coords[(k, 1)] - y0) / dy).round() as usize;
            let slot = &mut cells[ix * ny + iy];
            if *slot != usize::MAX {
                return Err(Error::invalid("two units share a lattice point"));
            }
            *slot = k;
        }
        Ok(Self { nx, ny, cells })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn unit_at(&self, ix: usize, iy: usize) -> usize {
        self.cells[ix * self.ny + iy]
    }
}

/// Generator of a rank-one lattice `{(i/n, (g i mod n)/n)}` scaled to the
/// `nx x ny` torus, chosen to maximise the minimum distance between points.
/// Returns `(g, min_distance)` in cell units.
fn lattice_generator(n: usize, nx: usize, ny: usize) -> (usize, f64) {
    if n == 1 {
        return (0, f64::INFINITY);
    }
    let (sx, sy) = (nx as f64 / n as f64, ny as f64 / n as f64);
    let torus = |d: f64, len: f64| {
        let d = d.rem_euclid(len);
        d.min(len - d)
    };
    let mut best = (1, 0.0);
    for g in 1..n {
        let dmin = (1..n)
            .map(|i| {
                let dx = torus(i as f64 * sx, nx as f64);
                let dy = torus(((g * i) % n) as f64 * sy, ny as f64);
                dx.hypot(dy)
            })
            .fold(f64::INFINITY, f64::min);
        if dmin > best.1 + 1e-12 {
            best = (g, dmin);
        }
    }
    best
}

/// Equal-probability systematic sampling on a lattice population.
///
/// The `n` points of a rank-one lattice on the torus spanned by the population
/// lattice are shifted by a uniform random offset and each point selects the
/// unit whose cell contains it. Every unit has inclusion probability `n / N`
/// and the sample size is exactly `n`.
pub fn systematic_grid_sample<R: Rng + ?Sized>(
    frame: &PopulationFrame,
    n: usize,
    rng: &mut R,
) -> Result<Sample> {
    let lattice = Lattice::detect(frame)?;
    SystematicGrid::new(lattice, n)?.draw(rng)
}

/// Precomputed systematic design on a fixed lattice.
#[derive(Clone, Debug)]
pub struct SystematicGrid {
    lattice: Lattice,
    n: usize,
    generator: usize,
}

impl SystematicGrid {
    pub fn new(lattice: Lattice, n: usize) -> Result<Self> {
        let (nx, ny) = lattice.shape();
        let population = nx * ny;
        if n > population {
            return Err(Error::invalid(format!(
                "sample size {n} exceeds population size {population}"
            )));
        }
        let (generator, dmin) = if n == 0 || n == population {
            (0, f64::INFINITY)
        } else {
            lattice_generator(n, nx, ny)
        };
        // Points at least a cell diagonal apart never share a cell.
        if dmin < std::f64::consts::SQRT_2 {
            return Err(Error::invalid(format!(
                "sample size {n} is too dense for systematic sampling on a {nx}x{ny} lattice"
            )));
        }
        Ok(Self { lattice, n, generator })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Sample> {
        let (nx, ny) = self.lattice.shape();
        let population = nx * ny;
        if self.n == population {
            return Ok(Sample::census(population));
        }
        let ux = rng.random::<f64>() * nx as f64;
        let uy = rng.random::<f64>() * ny as f64;
        let mut units: Vec<usize> = (0..self.n)
            .map(|i| {
                let x = (i as f64 * nx as f64 / self.n as f64 + ux).rem_euclid(nx as f64);
                let y = (((self.generator * i) % self.n) as f64 * ny as f64 / self.n as f64 + uy)
                    .rem_euclid(ny as f64);
                let ix = (x.floor() as usize).min(nx - 1);
                let iy = (y.floor() as usize).min(ny - 1);
                self.lattice.unit_at(ix, iy)
            })
            .collect();
        units.sort_unstable();
        units.dedup();
        if units.len() != self.n {
            return Err(Error::Numerical("systematic lattice points collided".into()));
        }
        Ok(Sample::from_sorted_unchecked(population, units))
    }
}
