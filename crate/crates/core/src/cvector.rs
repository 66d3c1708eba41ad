//! Orientation basis and the per-module C-vector: the least-norm solution
//! of `bᵀ·C = P` for each power sample.

use std::io::Write;

use chrono::{DateTime, Utc};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{em_fit, DegenerateGaussianMixture, EmOptions, GaussianMixture, TransformedMixture};
use crate::weather::format_utc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationBasis {
    pub tilt: f64,
    pub azimuth: f64,
    pub b: [f64; 4],
    pub b_plus: [f64; 4],
}

pub fn orientation_basis(tilt: f64, azimuth: f64) -> Result<OrientationBasis> {
    if !(0.0..=90.0).contains(&tilt) {
        return Err(Error::invalid("tilt", format!("{tilt} outside [0, 90]")));
    }
    if !(0.0..360.0).contains(&azimuth) {
        return Err(Error::invalid("azimuth", format!("{azimuth} outside [0, 360)")));
    }
    let (beta, gamma) = (tilt.to_radians(), azimuth.to_radians());
    let b = [beta.cos(), beta.sin() * gamma.cos(), beta.sin() * gamma.sin(), 1.0];
    let inv: Vec<f64> = pseudo_inverse(&b)?;
    Ok(OrientationBasis {
        tilt,
        azimuth,
        b,
        b_plus: [inv[0], inv[1], inv[2], inv[3]],
    })
}

/// `x / ‖x‖²`, the Moore–Penrose inverse of a row vector.
pub fn pseudo_inverse(x: &[f64]) -> Result<Vec<f64>> {
    let n2: f64 = x.iter().map(|v| v * v).sum();
    if !(n2 > 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(x.iter().map(|v| v / n2).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CSeries {
    pub module_id: u32,
    pub timestamps: Vec<DateTime<Utc>>,
    pub values: Vec<[f64; 4]>,
}

impl CSeries {
    /// Column `k` (0-based, so `C₁` is 0).
    pub fn channel(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[k]).collect()
    }

    pub fn reconstruct(&self, basis: &OrientationBasis) -> Vec<f64> {
        self.values
            .iter()
            .map(|c| c.iter().zip(&basis.b).map(|(x, y)| x * y).sum())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["timestamp", "module_id", "c1", "c2", "c3", "c4"])?;
        for (t, row) in self.timestamps.iter().zip(&self.values) {
            let mut rec = vec![format_utc(t), self.module_id.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv sink>", e))?;
        Ok(())
    }
}

/// Maps each power sample through `b⁺`. Timestamps may be empty when the
/// caller has none.
pub fn c_series(module_id: u32, power: &[f64], timestamps: &[DateTime<Utc>], basis: &OrientationBasis) -> CSeries {
    CSeries {
        module_id,
        timestamps: timestamps.to_vec(),
        values: power.iter().map(|&p| basis.b_plus.map(|k| k * p)).collect(),
    }
}

/// The C density implied by a 1-D power mixture. Every component is rank 1,
/// supported on the line spanned by `b⁺`.
pub fn c_distribution(power_gmm: &GaussianMixture, basis: &OrientationBasis) -> Result<DegenerateGaussianMixture> {
    if power_gmm.dimension() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "power mixture must be 1-D, got {}",
            power_gmm.dimension()
        )));
    }
    let p = DMatrix::from_column_slice(4, 1, &basis.b_plus);
    match power_gmm.linear_transform(&p, &DVector::zeros(4))? {
        TransformedMixture::Degenerate(d) => Ok(d),
        TransformedMixture::Regular(_) => unreachable!("a 4×1 map cannot be full rank"),
    }
}

/// A 1-D density for one channel of one module.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelDensity {
    Mixture(GaussianMixture),
    /// All mass at one value, e.g. `C₂ = C₃ = 0` for a flat module.
    PointMass(f64),
}

impl ChannelDensity {
    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            ChannelDensity::Mixture(g) => g.pdf(&[x]).expect("1-D mixture"),
            ChannelDensity::PointMass(_) => 0.0,
        }
    }
}

/// Fits a 1-D mixture to `samples`. A channel with no spread becomes a
/// point mass.
pub fn fit_channel(samples: &[f64], options: &EmOptions) -> Result<ChannelDensity> {
    let first = *samples.first().ok_or(Error::EmptyDataset)?;
    let spread = samples.iter().fold(0.0f64, |m, v| m.max((v - first).abs()));
    if spread <= 1e-12 * first.abs().max(1.0) {
        return Ok(ChannelDensity::PointMass(first));
    }
    let fit = em_fit(&DMatrix::from_column_slice(samples.len(), 1, samples), options)?;
    Ok(ChannelDensity::Mixture(fit.mixture))
}

/// Per-channel densities of a C series (the default route for divergence).
pub fn fit_c_channels(series: &CSeries, options: &EmOptions) -> Result<[ChannelDensity; 4]> {
    let fit = |k: usize| fit_channel(&series.channel(k), options);
    Ok([fit(0)?, fit(1)?, fit(2)?, fit(3)?])
}
