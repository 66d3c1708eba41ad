//! Gaussian mixtures: EM fitting, densities, marginals, affine transforms
//! and the rank-deficient (degenerate) representation that affine maps into
//! higher dimensions produce.

mod degenerate;
mod em;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::degenerate::{degenerate_pdf, DegenerateComponent, DegenerateGaussianMixture};
pub use self::em::{bic, em_fit, select_components, EmFit, EmOptions};

/// Eigenvalues below this fraction of the largest eigenvalue count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

const FORMAT_TAG: &str = "pvfault.gmm/1";
const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    dimension: usize,
    components: Vec<Component>,
}

/// Lower Cholesky factor stored row-major, with its log-determinant.
#[derive(Debug, Clone)]
pub(crate) struct Factor {
    dim: usize,
    lower: Vec<f64>,
    pub(crate) log_det: f64,
}

impl Factor {
    /// Cholesky factor, `None` unless `cov` is numerically positive definite.
    pub(crate) fn cholesky(cov: &DMatrix<f64>) -> Option<Factor> {
        let dim = cov.nrows();
        if dim == 0 {
            return None;
        }
        let chol = nalgebra::Cholesky::new(cov.clone())?;
        let l = chol.l();
        let mut lower = vec![0.0; dim * dim];
        let mut log_det = 0.0;
        for i in 0..dim {
            for j in 0..=i {
                lower[i * dim + j] = l[(i, j)];
            }
            log_det += 2.0 * l[(i, i)].ln();
        }
        log_det.is_finite().then_some(Factor { dim, lower, log_det })
    }

    /// Like [`Factor::cholesky`] but also rejects covariances whose numerical
    /// rank is below full.
    pub(crate) fn new(cov: &DMatrix<f64>) -> Option<Factor> {
        if numerical_rank(cov) < cov.nrows() {
            return None;
        }
        Factor::cholesky(cov)
    }

    /// Squared Mahalanobis distance of `x − mean`.
    pub(crate) fn mahalanobis(&self, x: &[f64], mean: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            let mut s = x[i] - mean[i];
            let row = &self.lower[i * d..i * d + i];
            for (j, lij) in row.iter().enumerate() {
                s -= lij * scratch[j];
            }
            let z = s / self.lower[i * d + i];
            scratch[i] = z;
            acc += z * z;
        }
        acc
    }

    pub(crate) fn ln_normal(&self, x: &[f64], mean: &[f64], scratch: &mut [f64]) -> f64 {
        -0.5 * (self.dim as f64 * LN_2PI + self.log_det + self.mahalanobis(x, mean, scratch))
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn check_covariance(cov: &DMatrix<f64>, component: usize) -> Result<()> {
    let scale = spectral_norm(cov).max(1.0);
    let asym = (cov - cov.transpose()).abs().max();
    if asym > 1e-9 * scale {
        return Err(Error::invalid(format!("component {component} covariance"), "not symmetric"));
    }
    let min = cov.clone().symmetric_eigenvalues().iter().cloned().fold(f64::MAX, f64::min);
    if min < -1e-9 * spectral_norm(cov) {
        return Err(Error::invalid(format!("component {component} covariance"), "not positive semidefinite"));
    }
    Ok(())
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn check_weights(weights: impl Iterator<Item = f64>) -> Result<()> {
    let mut sum = 0.0;
    for (i, w) in weights.enumerate() {
        if !(w > 0.0 && w <= 1.0) {
            return Err(Error::invalid(format!("component {i} weight"), format!("{w} outside (0, 1]")));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("weights", format!("sum to {sum}, expected 1")));
    }
    Ok(())
}

/// The result of an affine map: full rank, or rank-deficient in at least one
/// component.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformedMixture {
    Regular(GaussianMixture),
    Degenerate(DegenerateGaussianMixture),
}

impl TransformedMixture {
    pub fn dimension(&self) -> usize {
        match self {
            TransformedMixture::Regular(g) => g.dimension(),
            TransformedMixture::Degenerate(d) => d.dimension(),
        }
    }

    /// `(weight, mean, covariance)` of every component.
    pub fn moments(&self) -> Vec<(f64, DVector<f64>, DMatrix<f64>)> {
        match self {
            TransformedMixture::Regular(g) => g
                .components()
                .iter()
                .map(|c| (c.weight, c.mean.clone(), c.covariance.clone()))
                .collect(),
            TransformedMixture::Degenerate(d) => d
                .components()
                .iter()
                .map(|c| (c.weight, c.offset.clone(), c.covariance.clone()))
                .collect(),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, TransformedMixture::Degenerate(_))
    }
}

impl GaussianMixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let dimension = components.first().map(|c| c.mean.len()).ok_or_else(|| {
            Error::invalid("mixture", "needs at least one component")
        })?;
        if dimension == 0 {
            return Err(Error::invalid("mixture", "dimension must be positive"));
        }
        for (i, c) in components.iter().enumerate() {
            if c.mean.len() != dimension || c.covariance.shape() != (dimension, dimension) {
                return Err(Error::ShapeMismatch(format!("component {i} does not have dimension {dimension}")));
            }
            if c.mean.iter().chain(c.covariance.iter()).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("component {i}"), "non-finite parameter"));
            }
            check_covariance(&c.covariance, i)?;
        }
        check_weights(components.iter().map(|c| c.weight))?;
        Ok(GaussianMixture { dimension, components })
    }

    /// Single Gaussian.
    pub fn gaussian(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        GaussianMixture::new(vec![Component {
            weight: 1.0,
            mean,
            covariance,
        }])
    }

    /// One-dimensional mixture from `(weight, mean, variance)` triples.
    pub fn univariate(parts: &[(f64, f64, f64)]) -> Result<Self> {
        GaussianMixture::new(
            parts
                .iter()
                .map(|&(w, m, v)| Component {
                    weight: w,
                    mean: DVector::from_element(1, m),
                    covariance: DMatrix::from_element(1, 1, v),
                })
                .collect(),
        )
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub(crate) fn factors(&self) -> Result<Vec<Factor>> {
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| Factor::new(&c.covariance).ok_or(Error::SingularCovariance { component: i }))
            .collect()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::ShapeMismatch(format!(
                "point has dimension {}, mixture has {}",
                x.len(),
                self.dimension
            )));
        }
        Ok(())
    }

    /// Density at `x`. Errors if any covariance is singular.
    pub fn pdf(&self, x: &[f64]) -> Result<f64> {
        Ok(self.ln_pdf(x)?.exp())
    }

    pub fn ln_pdf(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let factors = self.factors()?;
        Ok(self.ln_pdf_with(&factors, x))
    }

    pub(crate) fn ln_pdf_with(&self, factors: &[Factor], x: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.dimension];
        let terms: Vec<f64> = self
            .components
            .iter()
            .zip(factors)
            .map(|(c, f)| c.weight.ln() + f.ln_normal(x, c.mean.as_slice(), &mut scratch))
            .collect();
        log_sum_exp(&terms)
    }

    /// Density of component `m` alone (not weighted).
    pub fn component_pdf(&self, m: usize, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let c = &self.components[m];
        let f = Factor::new(&c.covariance).ok_or(Error::SingularCovariance { component: m })?;
        let mut scratch = vec![0.0; self.dimension];
        Ok(f.ln_normal(x, c.mean.as_slice(), &mut scratch).exp())
    }

    /// Sum of log densities over the rows of `samples` (T×W).
    pub fn log_likelihood(&self, samples: &DMatrix<f64>) -> Result<f64> {
        if samples.ncols() != self.dimension {
            return Err(Error::ShapeMismatch(format!(
                "samples have {} columns, mixture has dimension {}",
                samples.ncols(),
                self.dimension
            )));
        }
        let factors = self.factors()?;
        let mut row = vec![0.0; self.dimension];
        let mut total = 0.0;
        for r in 0..samples.nrows() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = samples[(r, c)];
            }
            total += self.ln_pdf_with(&factors, &row);
        }
        Ok(total)
    }

    /// Mixture of the sub-vector at `indices` (0-based, in the given order).
    pub fn marginal(&self, indices: &[usize]) -> Result<GaussianMixture> {
        if indices.is_empty() {
            return Err(Error::InvalidIndices("empty index set".into()));
        }
        if let Some(bad) = indices.iter().find(|&&i| i >= self.dimension) {
            return Err(Error::InvalidIndices(format!("index {bad} out of range for dimension {}", self.dimension)));
        }
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != indices.len() {
            return Err(Error::InvalidIndices("repeated index".into()));
        }
        let k = indices.len();
        let components = self
            .components
            .iter()
            .map(|c| Component {
                weight: c.weight,
                mean: DVector::from_fn(k, |i, _| c.mean[indices[i]]),
                covariance: DMatrix::from_fn(k, k, |i, j| c.covariance[(indices[i], indices[j])]),
            })
            .collect();
        Ok(GaussianMixture {
            dimension: k,
            components,
        })
    }

    /// Distribution of `P·x + Q`. Returns the degenerate representation when
    /// any transformed covariance is rank-deficient.
    pub fn linear_transform(&self, p: &DMatrix<f64>, q: &DVector<f64>) -> Result<TransformedMixture> {
        if p.ncols() != self.dimension || p.nrows() != q.len() {
            return Err(Error::ShapeMismatch(format!(
                "P is {}x{}, Q has {} entries, mixture dimension {}",
                p.nrows(),
                p.ncols(),
                q.len(),
                self.dimension
            )));
        }
        let k = p.nrows();
        let moved: Vec<Component> = self
            .components
            .iter()
            .map(|c| {
                let cov = p * &c.covariance * p.transpose();
                Component {
                    weight: c.weight,
                    mean: p * &c.mean + q,
                    covariance: (&cov + cov.transpose()) * 0.5,
                }
            })
            .collect();
        let full_rank = moved.iter().all(|c| numerical_rank(&c.covariance) == k);
        if full_rank {
            Ok(TransformedMixture::Regular(GaussianMixture {
                dimension: k,
                components: moved,
            }))
        } else {
            Ok(TransformedMixture::Degenerate(DegenerateGaussianMixture::from_components(moved)?))
        }
    }

    /// Draws `n` samples as rows of an `n × W` matrix.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let w = self.dimension;
        let roots: Vec<DMatrix<f64>> = self.components.iter().map(|c| covariance_root(&c.covariance)).collect();
        let mut out = DMatrix::zeros(n, w);
        for r in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut m = self.components.len() - 1;
            for (i, c) in self.components.iter().enumerate() {
                acc += c.weight;
                if u < acc {
                    m = i;
                    break;
                }
            }
            let z = DVector::from_fn(w, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &self.components[m].mean + &roots[m] * z;
            out.set_row(r, &x.transpose());
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = MixtureDocument {
            format: FORMAT_TAG.to_string(),
            dimension: self.dimension,
            components: self
                .components
                .iter()
                .map(|c| ComponentDocument {
                    weight: c.weight,
                    mean: c.mean.iter().cloned().collect(),
                    covariance: (0..self.dimension)
                        .map(|i| c.covariance.row(i).iter().cloned().collect())
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("mixture document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MixtureDocument = serde_json::from_str(text)?;
        if doc.format != FORMAT_TAG {
            return Err(Error::UnsupportedFormat(doc.format));
        }
        let d = doc.dimension;
        let components = doc
            .components
            .into_iter()
            .map(|c| {
                if c.covariance.len() != d || c.covariance.iter().any(|r| r.len() != d) {
                    return Err(Error::ShapeMismatch("covariance rows".into()));
                }
                Ok(Component {
                    weight: c.weight,
                    mean: DVector::from_vec(c.mean),
                    covariance: DMatrix::from_fn(d, d, |i, j| c.covariance[i][j]),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let g = GaussianMixture::new(components)?;
        if g.dimension != d {
            return Err(Error::ShapeMismatch("dimension tag disagrees with components".into()));
        }
        Ok(g)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureDocument {
    format: String,
    dimension: usize,
    components: Vec<ComponentDocument>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentDocument {
    weight: f64,
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

/// Number of eigenvalues above `RANK_TOLERANCE` times the largest.
pub fn numerical_rank(cov: &DMatrix<f64>) -> usize {
    let eig = cov.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return 0;
    }
    eig.iter().filter(|&&v| v > RANK_TOLERANCE * max).count()
}

/// Symmetric square root `U·diag(√λ)` (negative eigenvalues clipped), valid
/// for singular covariances too.
fn covariance_root(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(cov.clone());
    let mut u = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        u.column_mut(j).scale_mut(s);
    }
    u
}

/// Univariate normal density.
pub fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let z = x - mean;
    (-0.5 * z * z / variance).exp() / (2.0 * PI * variance).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_by_two() -> GaussianMixture {
        GaussianMixture::new(vec![
            Component {
                weight: 0.3,
                mean: DVector::from_vec(vec![1.0, -2.0]),
                covariance: DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]),
            },
            Component {
                weight: 0.7,
                mean: DVector::from_vec(vec![-1.5, 0.5]),
                covariance: DMatrix::from_row_slice(2, 2, &[0.5, -0.2, -0.2, 0.8]),
            },
        ])
        .unwrap()
    }

    // Direct evaluation of the bivariate normal formula.
    fn bivariate(x: &[f64], mu: &DVector<f64>, s: &DMatrix<f64>) -> f64 {
        let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
        let (dx, dy) = (x[0] - mu[0], x[1] - mu[1]);
        let q = (s[(1, 1)] * dx * dx - 2.0 * s[(0, 1)] * dx * dy + s[(0, 0)] * dy * dy) / det;
        (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
    }

    #[test]
    fn standard_normal_at_mean() {
        let g = GaussianMixture::gaussian(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!((g.pdf(&[0.0, 0.0]).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn pdf_is_weighted_sum_of_components() {
        let g = two_by_two();
        for x in [[0.0, 0.0], [1.0, -2.0], [3.0, 2.5], [-4.0, 1.0]] {
            let direct: f64 = g
                .components()
                .iter()
                .map(|c| c.weight * bivariate(&x, &c.mean, &c.covariance))
                .sum();
            let via_components: f64 = (0..2).map(|m| g.components()[m].weight * g.component_pdf(m, &x).unwrap()).sum();
            let p = g.pdf(&x).unwrap();
            assert!((p - direct).abs() <= 1e-12 * direct.max(1e-300), "{p} {direct}");
            assert!((p - via_components).abs() <= 1e-12 * p.max(1e-300));
        }
    }

    #[test]
    fn univariate_mixture_integrates_to_one() {
        let g = GaussianMixture::univariate(&[(0.4, -3.0, 0.5), (0.6, 4.0, 2.0)]).unwrap();
        let (lo, hi, n) = (-20.0, 25.0, 20_000);
        let h = (hi - lo) / n as f64;
        // composite Simpson
        let mut s = g.pdf(&[lo]).unwrap() + g.pdf(&[hi]).unwrap();
        for i in 1..n {
            let x = lo + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * g.pdf(&[x]).unwrap();
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn singular_covariance_is_reported() {
        let g = GaussianMixture::gaussian(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]))
            .unwrap();
        assert!(matches!(g.pdf(&[0.0, 0.0]), Err(Error::SingularCovariance { component: 0 })));
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad_weights = GaussianMixture::univariate(&[(0.5, 0.0, 1.0), (0.4, 1.0, 1.0)]);
        assert!(bad_weights.is_err());
        let not_psd = GaussianMixture::gaussian(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(not_psd.is_err());
        let asym = GaussianMixture::gaussian(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]));
        assert!(asym.is_err());
    }

    #[test]
    fn log_likelihood_examples() {
        let g = GaussianMixture::univariate(&[(1.0, 0.0, 1.0)]).unwrap();
        let one = g.log_likelihood(&DMatrix::from_element(1, 1, 0.0)).unwrap();
        assert!((one - (1.0 / (2.0 * PI).sqrt()).ln()).abs() < 1e-15);
        assert!((one + 0.918_938_533_204_672_7).abs() < 1e-12);
        let two = g.log_likelihood(&DMatrix::from_element(2, 1, 0.0)).unwrap();
        assert_eq!(two, 2.0 * one);

        let g = two_by_two();
        let samples = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, -1.0, 3.0, 2.0, -2.0]);
        let direct: f64 = (0..3)
            .map(|r| {
                let x = [samples[(r, 0)], samples[(r, 1)]];
                g.components().iter().map(|c| c.weight * bivariate(&x, &c.mean, &c.covariance)).sum::<f64>().ln()
            })
            .sum();
        assert!((g.log_likelihood(&samples).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn marginal_examples() {
        let g = two_by_two();
        assert_eq!(g.marginal(&[0, 1]).unwrap(), g);
        let single = GaussianMixture::gaussian(
            DVector::from_vec(vec![3.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]),
        )
        .unwrap();
        let m = single.marginal(&[0]).unwrap();
        assert_eq!(m.components()[0].mean[0], 3.0);
        assert_eq!(m.components()[0].covariance[(0, 0)], 4.0);
        assert!(g.marginal(&[]).is_err());
        assert!(g.marginal(&[2]).is_err());
        assert!(g.marginal(&[1, 1]).is_err());
    }

    #[test]
    fn marginal_matches_quadrature_of_joint() {
        let g = two_by_two();
        let m = g.marginal(&[0]).unwrap();
        for x0 in [-2.0, 0.0, 1.3, 3.0] {
            let (lo, hi, n) = (-15.0, 15.0, 6000);
            let h = (hi - lo) / n as f64;
            let mut s = 0.0;
            for i in 0..=n {
                let y = lo + i as f64 * h;
                let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * g.pdf(&[x0, y]).unwrap();
            }
            let integral = s * h / 3.0;
            assert!((m.pdf(&[x0]).unwrap() - integral).abs() < 1e-5);
        }
    }

    #[test]
    fn transform_identity_and_rank_one() {
        let g = two_by_two();
        let t = g.linear_transform(&DMatrix::identity(2, 2), &DVector::zeros(2)).unwrap();
        assert_eq!(t, TransformedMixture::Regular(g.clone()));

        let p1 = GaussianMixture::univariate(&[(0.5, 100.0, 25.0), (0.5, 300.0, 400.0)]).unwrap();
        let b: [f64; 4] = [0.8, -0.3, 0.2, 1.0];
        let norm2: f64 = b.iter().map(|v| v * v).sum();
        let p = DMatrix::from_fn(4, 1, |i, _| b[i] / norm2);
        match p1.linear_transform(&p, &DVector::zeros(4)).unwrap() {
            TransformedMixture::Degenerate(d) => {
                assert!(d.components().iter().all(|c| c.rank == 1));
            }
            other => panic!("expected degenerate, got {other:?}"),
        }
        assert!(g.linear_transform(&DMatrix::identity(3, 3), &DVector::zeros(3)).is_err());
    }

    #[test]
    fn json_roundtrip_is_lossless() {
        let g = two_by_two();
        let text = g.to_json();
        assert!(text.contains(FORMAT_TAG));
        assert_eq!(GaussianMixture::from_json(&text).unwrap(), g);
        let wrong = text.replace(FORMAT_TAG, "other/9");
        assert!(matches!(GaussianMixture::from_json(&wrong), Err(Error::UnsupportedFormat(_))));
    }

    fn random_mixture(rng: &mut ChaCha8Rng, w: usize, m: usize) -> GaussianMixture {
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        GaussianMixture::new(
            raw.iter()
                .map(|r| {
                    let a = DMatrix::from_fn(w, w, |_, _| rng.random_range(-1.0..1.0));
                    Component {
                        weight: r / total,
                        mean: DVector::from_fn(w, |_, _| rng.random_range(-5.0..5.0)),
                        covariance: &a * a.transpose() + DMatrix::identity(w, w) * 0.1,
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn transform_then_marginal_commutes(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_mixture(&mut rng, 4, 2);
            let k = 3;
            // P only reads inputs 1 and 3
            let keep = [1usize, 3];
            let p_small = DMatrix::from_fn(k, 2, |_, _| rng.random_range(-2.0..2.0));
            let mut p = DMatrix::zeros(k, 4);
            for (j, &c) in keep.iter().enumerate() {
                p.set_column(c, &p_small.column(j));
            }
            let q = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
            let a = g.linear_transform(&p, &q).unwrap().moments();
            let b = g.marginal(&keep).unwrap().linear_transform(&p_small, &q).unwrap().moments();
            for ((wa, ma, ca), (wb, mb, cb)) in a.iter().zip(&b) {
                prop_assert_eq!(wa, wb);
                prop_assert!((ma - mb).abs().max() < 1e-12);
                prop_assert!((ca - cb).abs().max() < 1e-12 * (1.0 + ca.abs().max()));
            }
            // selecting output rows is the same as transforming by those rows
            let p = DMatrix::from_fn(k, 4, |_, _| rng.random_range(-2.0..2.0));
            if let TransformedMixture::Regular(full) = g.linear_transform(&p, &q).unwrap() {
                let rows = [0usize, 2];
                let sub = full.marginal(&rows).unwrap();
                let p_rows = DMatrix::from_fn(2, 4, |i, j| p[(rows[i], j)]);
                let q_rows = DVector::from_fn(2, |i, _| q[rows[i]]);
                let direct = g.linear_transform(&p_rows, &q_rows).unwrap().moments();
                for (c, (_, m, s)) in sub.components().iter().zip(&direct) {
                    prop_assert!((&c.mean - m).abs().max() < 1e-12);
                    prop_assert!((&c.covariance - s).abs().max() < 1e-12 * (1.0 + s.abs().max()));
                }
            }
        }
    }
}
