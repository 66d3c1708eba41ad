use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{check_weights, Component, RANK_TOLERANCE};
use crate::error::{Error, Result};

/// A Gaussian component whose covariance may be singular, kept in its
/// eigenbasis. Eigenpairs are sorted by descending eigenvalue; the first
/// `rank` span the support directions and the rest are the normals of the
/// hyperplanes the component lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateComponent {
    pub weight: f64,
    /// `P·μ + Q`.
    pub offset: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, same order as `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateGaussianMixture {
    dimension: usize,
    components: Vec<DegenerateComponent>,
}

impl DegenerateComponent {
    pub fn new(weight: f64, offset: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let k = offset.len();
        if covariance.shape() != (k, k) {
            return Err(Error::ShapeMismatch("covariance does not match offset".into()));
        }
        let eig = SymmetricEigen::new(covariance.clone());
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
        let max = eigenvalues.first().cloned().unwrap_or(0.0);
        let rank = if max > 0.0 {
            eigenvalues.iter().filter(|&&v| v > RANK_TOLERANCE * max).count()
        } else {
            0
        };
        Ok(DegenerateComponent {
            weight,
            offset,
            covariance,
            eigenvalues,
            eigenvectors,
            rank,
        })
    }

    /// Whether `y` lies on this component's support (within `support_tol`
    /// along every null direction) and, if so, the density with respect to
    /// Lebesgue measure on that support.
    pub fn density(&self, y: &[f64], support_tol: f64) -> (bool, f64) {
        let k = self.offset.len();
        let centered = DVector::from_fn(k, |i, _| y[i] - self.offset[i]);
        let coords = self.eigenvectors.transpose() * &centered;
        let on_support = coords.iter().skip(self.rank).all(|c| c.abs() <= support_tol);
        if !on_support {
            return (false, 0.0);
        }
        let mut quad = 0.0;
        let mut log_det = 0.0;
        for i in 0..self.rank {
            quad += coords[i] * coords[i] / self.eigenvalues[i];
            log_det += self.eigenvalues[i].ln();
        }
        let ln = -0.5 * quad - 0.5 * self.rank as f64 * (2.0 * PI).ln() - 0.5 * log_det;
        (true, ln.exp())
    }

    /// Moore–Penrose pseudo-inverse of the covariance, `Σ λᵢ⁻¹ uᵢuᵢᵀ` over the
    /// nonzero eigenvalues.
    pub fn precision_pinv(&self) -> DMatrix<f64> {
        let k = self.offset.len();
        let mut out = DMatrix::zeros(k, k);
        for i in 0..self.rank {
            let u = self.eigenvectors.column(i);
            out += (u * u.transpose()) / self.eigenvalues[i];
        }
        out
    }
}

impl DegenerateGaussianMixture {
    pub(crate) fn from_components(components: Vec<Component>) -> Result<Self> {
        let dimension = components
            .first()
            .map(|c| c.mean.len())
            .ok_or_else(|| Error::invalid("mixture", "needs at least one component"))?;
        check_weights(components.iter().map(|c| c.weight))?;
        let components = components
            .into_iter()
            .map(|c| DegenerateComponent::new(c.weight, c.mean, c.covariance))
            .collect::<Result<_>>()?;
        Ok(DegenerateGaussianMixture { dimension, components })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn components(&self) -> &[DegenerateComponent] {
        &self.components
    }
}

/// Evaluates a degenerate mixture at `y`.
///
/// The delta factors of the singular density are represented by the
/// returned flag: it is true when `y` is on the support of at least one
/// component. The value sums `ωₘ · density` over the components whose
/// support contains `y`; it is only meaningful when those components share
/// a rank.
pub fn degenerate_pdf(dgm: &DegenerateGaussianMixture, y: &[f64], support_tol: f64) -> (bool, f64) {
    assert_eq!(y.len(), dgm.dimension, "point dimension");
    let mut any = false;
    let mut total = 0.0;
    for c in &dgm.components {
        let (on, d) = c.density(y, support_tol);
        if on {
            any = true;
            total += c.weight * d;
        }
    }
    (any, total)
}
