use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::frame::PopulationFrame;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    EuclideanOnCoords,
    MahalanobisOnAux,
}

/// Distances between units, stored as points whose Euclidean distance is the
/// metric distance. For the Mahalanobis metric the points are `L^-1 (x_k - mean)`
/// with `Sigma = L L^T`.
#[derive(Clone, Debug)]
pub struct DistanceContext {
    metric: Metric,
    points: Vec<f64>,
    dim: usize,
    mean: Option<DVector<f64>>,
    covariance: Option<DMatrix<f64>>,
}

impl DistanceContext {
    /// Euclidean distance on the rows of `coords` (`N x d`).
    pub fn euclidean(coords: &DMatrix<f64>) -> Result<Self> {
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("coordinates must be finite"));
        }
        Ok(Self {
            metric: Metric::EuclideanOnCoords,
            points: row_major(coords),
            dim: coords.ncols(),
            mean: None,
            covariance: None,
        })
    }

    pub fn from_coords(frame: &PopulationFrame) -> Result<Self> {
        Self::euclidean(frame.require_coords()?)
    }

    /// Mahalanobis distance on the rows of `x` (`N x p`), with the population
    /// covariance (divisor `N`). A ridge is added when the covariance is
    /// numerically singular.
    pub fn mahalanobis(x: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if n < 2 || p == 0 {
            return Err(Error::invalid("Mahalanobis distance needs at least 2 units and 1 variable"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("auxiliary values must be finite"));
        }
        let mean = DVector::from_fn(p, |j, _| x.column(j).mean());
        let centered = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - mean[j]);
        let mut sigma = centered.transpose() * &centered / n as f64;
        let trace = sigma.trace();
        if trace <= 0.0 {
            return Err(Error::Numerical("auxiliary variables are all constant".into()));
        }
        let scale = trace / p as f64;
        let min_eig = sigma.clone().symmetric_eigenvalues().min();
        if min_eig < 1e-12 * scale {
            log::warn!("auxiliary covariance is singular; adding a ridge");
            for j in 0..p {
                sigma[(j, j)] += 1e-10 * scale;
            }
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("auxiliary covariance is not positive definite".into()))?;
        let l = chol.l();
        let z = l
            .solve_lower_triangular(&centered.transpose())
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        Ok(Self {
            metric: Metric::MahalanobisOnAux,
            points: z.as_slice().to_vec(),
            dim: p,
            mean: Some(mean),
            covariance: Some(sigma),
        })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> Option<&DVector<f64>> {
        self.mean.as_ref()
    }

    /// The covariance used, including any ridge.
    pub fn covariance(&self) -> Option<&DMatrix<f64>> {
        self.covariance.as_ref()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn squared_distance(&self, k: usize, l: usize) -> f64 {
        squared(self.point(k), self.point(l))
    }
}

/// Mahalanobis context on the auxiliary matrix of a frame.
pub fn mahalanobis_context(frame: &PopulationFrame) -> Result<DistanceContext> {
    DistanceContext::mahalanobis(frame.aux())
}

pub(crate) fn squared(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_variable() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 3.0]);
        let ctx = DistanceContext::mahalanobis(&x).unwrap();
        let var = (0.0f64 + 1.0 + 9.0) / 3.0 - (4.0f64 / 3.0).powi(2);
        assert!((ctx.covariance().unwrap()[(0, 0)] - var).abs() < 1e-14);
        assert!((ctx.squared_distance(0, 1) - 1.0 / var).abs() < 1e-12);
        assert!((ctx.squared_distance(1, 2) - 4.0 / var).abs() < 1e-12);
        for k in 0..3 {
            assert_eq!(ctx.squared_distance(k, k), 0.0);
        }
    }

    #[test]
    fn matches_inverse_covariance_form() {
        let x = DMatrix::from_row_slice(
            5,
            2,
            &[0.0, 1.0, 2.0, 0.5, 1.0, 3.0, 4.0, 2.0, 3.0, 3.5],
        );
        let ctx = DistanceContext::mahalanobis(&x).unwrap();
        let inv = ctx.covariance().unwrap().clone().try_inverse().unwrap();
        for k in 0..5 {
            for l in 0..5 {
                let d = DVector::from_fn(2, |j, _| x[(k, j)] - x[(l, j)]);
                let direct = (d.transpose() * &inv * &d)[(0, 0)];
                assert!((direct - ctx.squared_distance(k, l)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn standardized_uncorrelated_is_euclidean() {
        // Columns with mean 0, population variance 1 and zero covariance.
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let m = DistanceContext::mahalanobis(&x).unwrap();
        let e = DistanceContext::euclidean(&x).unwrap();
        for k in 0..4 {
            for l in 0..4 {
                assert!((m.squared_distance(k, l) - e.squared_distance(k, l)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_covariance_is_regularized() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let ctx = DistanceContext::mahalanobis(&x).unwrap();
        assert!(ctx.squared_distance(0, 1).is_finite());
        assert!((ctx.squared_distance(0, 2) - 4.0 * ctx.squared_distance(0, 1)).abs() < 1e-9);
        let constant = DMatrix::from_element(3, 1, 2.0);
        assert!(DistanceContext::mahalanobis(&constant).is_err());
    }
}
