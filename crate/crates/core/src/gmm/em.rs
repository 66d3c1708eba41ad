use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Component, Factor, GaussianMixture, LN_2PI};
use crate::error::{Error, Result};

/// Relative jitter added to a covariance whose smallest eigenvalue falls
/// below this fraction of the pooled sample variance.
pub const COVARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmOptions {
    pub components: usize,
    pub seed: u64,
    /// Stop once the mean per-sample log-likelihood improves by less than this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            components: 3,
            seed: 0,
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub mixture: GaussianMixture,
    /// Total log-likelihood of the parameters after each update, starting
    /// with the initial guess. The last entry belongs to `mixture`.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of M-steps where a covariance needed the jitter floor.
    pub regularized_steps: usize,
}

impl EmFit {
    pub fn log_likelihood(&self) -> f64 {
        *self.log_likelihood_trace.last().expect("trace is never empty")
    }
}

struct Data {
    n: usize,
    w: usize,
    rows: Vec<f64>,
}

impl Data {
    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.w..(i + 1) * self.w]
    }
}

fn sample_covariance(data: &Data) -> (DVector<f64>, DMatrix<f64>) {
    let (n, w) = (data.n, data.w);
    let mut mean = DVector::zeros(w);
    for i in 0..n {
        for (j, v) in data.row(i).iter().enumerate() {
            mean[j] += v;
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(w, w);
    for i in 0..n {
        let x = data.row(i);
        for a in 0..w {
            let da = x[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += da * (x[b] - mean[b]);
            }
        }
    }
    for a in 0..w {
        for b in 0..a {
            cov[(b, a)] = cov[(a, b)];
        }
    }
    (mean, cov / n as f64)
}

/// k-means++ seeding: first center uniform, each next one drawn with
/// probability proportional to squared distance from the nearest center.
fn seed_means(data: &Data, m: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let first = rng.random_range(0..data.n);
    let mut centers = vec![first];
    let mut nearest: Vec<f64> = (0..data.n).map(|i| dist2(data.row(i), data.row(first))).collect();
    while centers.len() < m {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = data.n - 1;
            for (i, d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..data.n)
        };
        centers.push(pick);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist2(data.row(i), data.row(pick)));
        }
    }
    centers.iter().map(|&c| DVector::from_column_slice(data.row(c))).collect()
}

struct Estep {
    /// Row-major `n × m` responsibilities.
    resp: Vec<f64>,
    log_likelihood: f64,
}

const CHUNK_ROWS: usize = 512;

fn e_step(data: &Data, params: &[Component], factors: &[Factor]) -> Estep {
    let m = params.len();
    let mut resp = vec![0.0; data.n * m];
    let offsets: Vec<f64> = params
        .iter()
        .zip(factors)
        .map(|(c, f)| c.weight.ln() - 0.5 * (data.w as f64 * LN_2PI + f.log_det))
        .collect();
    let univariate = data.w == 1;
    let means: Vec<f64> = params.iter().map(|c| c.mean[0]).collect();
    let precisions: Vec<f64> = params.iter().map(|c| 1.0 / c.covariance[(0, 0)]).collect();
    // per-chunk partial sums, added in chunk order so the total is reproducible
    let partials: Vec<f64> = resp
        .par_chunks_mut(CHUNK_ROWS * m)
        .enumerate()
        .map(|(chunk, out)| {
            let mut scratch = vec![0.0; data.w];
            let mut ll = 0.0;
            for (r, row_out) in out.chunks_mut(m).enumerate() {
                let x = data.row(chunk * CHUNK_ROWS + r);
                let mut max = f64::NEG_INFINITY;
                for k in 0..m {
                    let q = if univariate {
                        let d = x[0] - means[k];
                        d * d * precisions[k]
                    } else {
                        factors[k].mahalanobis(x, params[k].mean.as_slice(), &mut scratch)
                    };
                    let v = offsets[k] - 0.5 * q;
                    row_out[k] = v;
                    max = max.max(v);
                }
                let mut total = 0.0;
                for v in row_out.iter_mut() {
                    *v = (*v - max).exp();
                    total += *v;
                }
                for v in row_out.iter_mut() {
                    *v /= total;
                }
                ll += max + total.ln();
            }
            ll
        })
        .collect();
    Estep {
        resp,
        log_likelihood: partials.iter().sum(),
    }
}

fn m_step(data: &Data, resp: &[f64], previous: &[Component], floor: f64) -> (Vec<Component>, bool) {
    let (n, w, m) = (data.n, data.w, previous.len());
    let mut nk = vec![0.0; m];
    let mut sums = vec![0.0; m * w];
    for (x, r) in data.rows.chunks_exact(w).zip(resp.chunks_exact(m)) {
        for k in 0..m {
            nk[k] += r[k];
            for j in 0..w {
                sums[k * w + j] += r[k] * x[j];
            }
        }
    }
    let empty: Vec<bool> = nk.iter().map(|&v| v <= f64::MIN_POSITIVE * n as f64).collect();
    let means: Vec<f64> = (0..m * w).map(|kj| if empty[kj / w] { 0.0 } else { sums[kj] / nk[kj / w] }).collect();
    let mut cross = vec![0.0; m * w * w];
    let mut d = vec![0.0; w];
    for (x, rs) in data.rows.chunks_exact(w).zip(resp.chunks_exact(m)) {
        for k in 0..m {
            let r = rs[k];
            if empty[k] || r == 0.0 {
                continue;
            }
            for j in 0..w {
                d[j] = x[j] - means[k * w + j];
            }
            let c = &mut cross[k * w * w..(k + 1) * w * w];
            for a in 0..w {
                let ra = r * d[a];
                for b in 0..=a {
                    c[a * w + b] += ra * d[b];
                }
            }
        }
    }

    let mut regularized = false;
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        if empty[k] {
            // empty component keeps its parameters with a tiny weight
            let mut c = previous[k].clone();
            c.weight = f64::MIN_POSITIVE;
            out.push(c);
            continue;
        }
        let c = &cross[k * w * w..(k + 1) * w * w];
        let mut cov = DMatrix::from_fn(w, w, |a, b| (if b <= a { c[a * w + b] } else { c[b * w + a] }) / nk[k]);
        let min_eig = if w == 1 {
            cov[(0, 0)]
        } else {
            cov.clone().symmetric_eigenvalues().iter().cloned().fold(f64::MAX, f64::min)
        };
        if min_eig < floor || Factor::cholesky(&cov).is_none() {
            for a in 0..w {
                cov[(a, a)] += floor;
            }
            regularized = true;
        }
        out.push(Component {
            weight: nk[k] / n as f64,
            mean: DVector::from_column_slice(&means[k * w..(k + 1) * w]),
            covariance: cov,
        });
    }
    let total: f64 = out.iter().map(|c| c.weight).sum();
    for c in &mut out {
        c.weight /= total;
    }
    (out, regularized)
}

/// Maximum-likelihood mixture for the rows of `samples` (T×W) by
/// expectation–maximization.
///
/// Initialization: k-means++ means, the pooled sample covariance for every
/// component, uniform weights. Covariances use the biased
/// responsibility-weighted estimate; a covariance whose smallest eigenvalue
/// drops below `1e-8 ×` the pooled variance gets that amount added to its
/// diagonal.
pub fn em_fit(samples: &DMatrix<f64>, options: &EmOptions) -> Result<EmFit> {
    let (n, w) = samples.shape();
    let m = options.components;
    if m == 0 {
        return Err(Error::invalid("components", "must be at least 1"));
    }
    if n <= m * w {
        return Err(Error::TooFewSamples { required: m * w, got: n });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples", "non-finite value"));
    }
    let data = Data {
        n,
        w,
        rows: (0..n).flat_map(|i| samples.row(i).iter().cloned().collect::<Vec<_>>()).collect(),
    };
    let (_, pooled) = sample_covariance(&data);
    let pooled_var = pooled.trace() / w as f64;
    if !(pooled_var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let floor = COVARIANCE_FLOOR * pooled_var;

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut init_cov = pooled.clone();
    if Factor::cholesky(&init_cov).is_none() {
        for a in 0..w {
            init_cov[(a, a)] += floor;
        }
    }
    let mut params: Vec<Component> = seed_means(&data, m, &mut rng)
        .into_iter()
        .map(|mean| Component {
            weight: 1.0 / m as f64,
            mean,
            covariance: init_cov.clone(),
        })
        .collect();

    let factorize = |params: &[Component]| -> Vec<Factor> {
        params
            .iter()
            .map(|c| {
                Factor::cholesky(&c.covariance).unwrap_or_else(|| {
                    let mut cov = c.covariance.clone();
                    for a in 0..w {
                        cov[(a, a)] += floor;
                    }
                    Factor::cholesky(&cov).expect("floored covariance is positive definite")
                })
            })
            .collect()
    };

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut regularized_steps = 0;
    loop {
        let factors = factorize(&params);
        let e = e_step(&data, &params, &factors);
        trace.push(e.log_likelihood);
        if trace.len() >= 2 {
            let gain = (trace[trace.len() - 1] - trace[trace.len() - 2]) / n as f64;
            if gain < options.tol {
                converged = true;
                break;
            }
        }
        if iterations >= options.max_iter {
            break;
        }
        let (next, regularized) = m_step(&data, &e.resp, &params, floor);
        regularized_steps += regularized as usize;
        params = next;
        iterations += 1;
    }

    let mixture = GaussianMixture::new(params)?;
    Ok(EmFit {
        mixture,
        log_likelihood_trace: trace,
        iterations,
        converged,
        regularized_steps,
    })
}

/// Bayesian information criterion, `−2·LL + p·ln T`, for full covariances.
pub fn bic(mixture: &GaussianMixture, samples: &DMatrix<f64>) -> Result<f64> {
    let (m, w) = (mixture.num_components() as f64, mixture.dimension() as f64);
    let params = (m - 1.0) + m * w + m * w * (w + 1.0) / 2.0;
    Ok(-2.0 * mixture.log_likelihood(samples)? + params * (samples.nrows() as f64).ln())
}

/// Fits `1..=max_components` components and returns the count with the
/// lowest BIC together with that fit.
pub fn select_components(samples: &DMatrix<f64>, max_components: usize, options: &EmOptions) -> Result<(usize, EmFit)> {
    let mut best: Option<(f64, usize, EmFit)> = None;
    for m in 1..=max_components.max(1) {
        let fit = em_fit(samples, &EmOptions { components: m, ..*options })?;
        let score = bic(&fit.mixture, samples)?;
        if best.as_ref().is_none_or(|(s, ..)| score < *s) {
            best = Some((score, m, fit));
        }
    }
    let (_, m, fit) = best.expect("at least one candidate");
    Ok((m, fit))
}
