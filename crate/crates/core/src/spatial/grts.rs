//! Generalized random tessellation stratified sampling on a quadtree.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sample::{InclusionProbabilities, Sample};

/// Cells are not split below this depth; co-located units end up in one leaf.
pub const MAX_DEPTH: usize = 20;

struct Cell {
    x0: f64,
    y0: f64,
    size: f64,
}

/// Orders units by a randomized quadtree: each cell is split into quadrants
/// until its inclusion probabilities sum to at most 1, quadrants are visited
/// in a fresh random order at every node and units inside a leaf are shuffled.
pub fn grts_order<R: Rng + ?Sized>(
    x: &[f64],
    y: &[f64],
    pi: &[f64],
    rng: &mut R,
) -> Vec<usize> {
    let units: Vec<usize> = (0..pi.len()).filter(|&k| pi[k] > 0.0).collect();
    if units.is_empty() {
        return units;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &k in &units {
        x0 = x0.min(x[k]);
        x1 = x1.max(x[k]);
        y0 = y0.min(y[k]);
        y1 = y1.max(y[k]);
    }
    let size = (x1 - x0).max(y1 - y0);
    let mut out = Vec::with_capacity(units.len());
    visit(Cell { x0, y0, size }, units, 0, x, y, pi, rng, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn visit<R: Rng + ?Sized>(
    cell: Cell,
    mut units: Vec<usize>,
    depth: usize,
    x: &[f64],
    y: &[f64],
    pi: &[f64],
    rng: &mut R,
    out: &mut Vec<usize>,
) {
    let mass: f64 = units.iter().map(|&k| pi[k]).sum();
    if units.len() == 1 || mass <= 1.0 || depth >= MAX_DEPTH || cell.size <= 0.0 {
        units.shuffle(rng);
        out.extend(units);
        return;
    }
    let half = cell.size / 2.0;
    let (mx, my) = (cell.x0 + half, cell.y0 + half);
    let mut quads: [Vec<usize>; 4] = Default::default();
    for k in units {
        let q = usize::from(x[k] >= mx) + 2 * usize::from(y[k] >= my);
        quads[q].push(k);
    }
    let mut order = [0usize, 1, 2, 3];
    order.shuffle(rng);
    for q in order {
        let members = std::mem::take(&mut quads[q]);
        if members.is_empty() {
            continue;
        }
        let child = Cell {
            x0: if q & 1 == 1 { mx } else { cell.x0 },
            y0: if q & 2 == 2 { my } else { cell.y0 },
            size: half,
        };
        visit(child, members, depth + 1, x, y, pi, rng, out);
    }
}

/// Systematic sampling along `order` with a uniform random start: unit `k` is
/// selected when its slice of the cumulated inclusion probabilities contains
/// one of `u, u + 1, ..., u + n - 1`.
pub fn systematic_along<R: Rng + ?Sized>(order: &[usize], pi: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let u = rng.random::<f64>();
    let mut selected = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut next = u;
    for (i, &k) in order.iter().enumerate() {
        let upper = if i + 1 == order.len() { n as f64 } else { cum + pi[k] };
        if next < upper && selected.len() < n {
            selected.push(k);
            next += 1.0;
        }
        cum = upper;
    }
    selected
}

pub fn grts_sample<R: Rng + ?Sized>(
    coords: &nalgebra::DMatrix<f64>,
    pi: &InclusionProbabilities,
    rng: &mut R,
) -> Result<Sample> {
    pi.check_len(coords.nrows())?;
    if coords.ncols() != 2 {
        return Err(Error::invalid(format!(
            "GRTS needs 2 coordinates, found {}",
            coords.ncols()
        )));
    }
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("coordinates must be finite"));
    }
    let n = pi.integer_size().ok_or_else(|| {
        Error::invalid(format!(
            "GRTS needs an integer expected size, found {}",
            pi.expected_size()
        ))
    })?;
    let x: Vec<f64> = coords.column(0).iter().copied().collect();
    let y: Vec<f64> = coords.column(1).iter().copied().collect();
    let order = grts_order(&x, &y, pi.as_slice(), rng);
    let selected = systematic_along(&order, pi.as_slice(), n, rng);
    Sample::from_indices(pi.len(), selected)
}
