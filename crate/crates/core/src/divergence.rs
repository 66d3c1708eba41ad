//! Discretized 1-D densities, Kullback–Leibler and Jensen–Shannon
//! divergences (nats), and the pairwise module matrix.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cvector::ChannelDensity;
use crate::error::{Error, Result};

/// Density floor applied per cell before renormalization.
pub const DENSITY_FLOOR: f64 = 1e-12;
pub const MIN_GRID_POINTS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePdf {
    /// Cell centers, strictly increasing.
    pub grid: Vec<f64>,
    pub mass: Vec<f64>,
}

fn cell_centers(lo: f64, hi: f64, n: usize) -> Result<(Vec<f64>, f64)> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidGrid(format!("need lo < hi, got [{lo}, {hi}]")));
    }
    if n < MIN_GRID_POINTS {
        return Err(Error::InvalidGrid(format!("need at least {MIN_GRID_POINTS} points, got {n}")));
    }
    let dx = (hi - lo) / n as f64;
    Ok(((0..n).map(|i| lo + (i as f64 + 0.5) * dx).collect(), dx))
}

fn normalize(grid: Vec<f64>, mut density: Vec<f64>) -> DiscretePdf {
    for d in &mut density {
        if *d < DENSITY_FLOOR {
            *d = DENSITY_FLOOR;
        }
    }
    let total: f64 = density.iter().sum();
    DiscretePdf {
        grid,
        mass: density.into_iter().map(|d| d / total).collect(),
    }
}

/// Evaluates `pdf` at the centers of `n` equal cells on `[lo, hi]`.
pub fn discretize(pdf: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Result<DiscretePdf> {
    let (grid, _) = cell_centers(lo, hi, n)?;
    let density: Vec<f64> = grid.iter().map(|&x| pdf(x)).collect();
    if density.iter().all(|&d| !(d > DENSITY_FLOOR)) {
        return Err(Error::SupportOutsideGrid);
    }
    Ok(normalize(grid, density))
}

/// Discretizes a channel density. A point mass lands in the cell that
/// contains it.
pub fn discretize_channel(density: &ChannelDensity, lo: f64, hi: f64, n: usize) -> Result<DiscretePdf> {
    match density {
        ChannelDensity::Mixture(g) => discretize(|x| g.pdf(&[x]).expect("1-D mixture"), lo, hi, n),
        ChannelDensity::PointMass(v) => {
            let (grid, dx) = cell_centers(lo, hi, n)?;
            if *v < lo || *v > hi {
                return Err(Error::SupportOutsideGrid);
            }
            let cell = (((v - lo) / dx) as usize).min(n - 1);
            let mut density = vec![0.0; n];
            density[cell] = 1.0 / dx;
            Ok(normalize(grid, density))
        }
    }
}

fn check_grids(p: &DiscretePdf, q: &DiscretePdf) -> Result<()> {
    if p.grid != q.grid || p.mass.len() != q.mass.len() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

fn kl_terms(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

pub fn kld(p: &DiscretePdf, q: &DiscretePdf) -> Result<f64> {
    check_grids(p, q)?;
    Ok(kl_terms(&p.mass, &q.mass))
}

pub fn jsd(p: &DiscretePdf, q: &DiscretePdf) -> Result<f64> {
    check_grids(p, q)?;
    Ok(jsd_masses(&p.mass, &q.mass))
}

/// Each term is written symmetrically in `p` and `q`, so the sum is
/// bit-for-bit symmetric.
fn jsd_masses(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let h = 0.5 * (a + b);
        let term = |x: f64| if x > 0.0 { x * (x / h).ln() } else { 0.0 };
        total += 0.5 * (term(a) + term(b));
    }
    total.clamp(0.0, std::f64::consts::LN_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridPolicy {
    pub points: usize,
    pub lower_percentile: f64,
    pub upper_percentile: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            points: 512,
            lower_percentile: 0.1,
            upper_percentile: 99.9,
        }
    }
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (pct / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let i = pos.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    let frac = pos - i as f64;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

/// One module's channel densities together with the samples they were fit
/// to. The samples only set the shared grid.
#[derive(Debug, Clone)]
pub struct ModuleChannels {
    pub densities: Vec<ChannelDensity>,
    pub samples: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceMatrix {
    pub module_ids: Vec<u32>,
    /// Row-major `W × W`.
    pub values: Vec<f64>,
}

impl DivergenceMatrix {
    pub fn size(&self) -> usize {
        self.module_ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.size();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn mean_off_diagonal(&self) -> f64 {
        let w = self.size();
        if w < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 0..w {
            for j in 0..w {
                if i != j {
                    total += self.get(i, j);
                }
            }
        }
        total / (w * (w - 1)) as f64
    }

    /// Square CSV with module ids as the header row and first column.
    pub fn write_csv<W: Write>(&self, sink: W, provenance: &[(&str, String)]) -> Result<()> {
        let mut sink = sink;
        for (k, v) in provenance {
            writeln!(sink, "# {k}={v}").map_err(|e| Error::io("<csv sink>", e))?;
        }
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec![String::from("module")];
        header.extend(self.module_ids.iter().map(u32::to_string));
        w.write_record(&header)?;
        for (i, id) in self.module_ids.iter().enumerate() {
            let mut rec = vec![id.to_string()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv sink>", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: DivergenceMatrix = serde_json::from_str(text)?;
        if m.values.len() != m.module_ids.len() * m.module_ids.len() {
            return Err(Error::ShapeMismatch("values length is not ids²".into()));
        }
        Ok(m)
    }
}

/// A channel density ready for pairwise comparison.
enum Slot {
    Grid(DiscretePdf),
    /// Value and the tolerance within which two point masses coincide.
    Point(f64, f64),
}

impl Slot {
    /// A point mass and a density with no atoms are mutually singular, so
    /// their divergence is exactly ln 2 whatever the grid.
    fn jsd(&self, other: &Slot) -> f64 {
        match (self, other) {
            (Slot::Grid(p), Slot::Grid(q)) => jsd_masses(&p.mass, &q.mass),
            (Slot::Point(a, tol), Slot::Point(b, _)) => {
                if (a - b).abs() <= *tol {
                    0.0
                } else {
                    std::f64::consts::LN_2
                }
            }
            _ => std::f64::consts::LN_2,
        }
    }
}

/// Pairwise JSD, averaged over channels. Each channel is discretized on a
/// grid spanning the pooled percentile range of that channel's samples
/// across all modules. Channels with an empty range are skipped. Pairs
/// involving a point mass use the exact value rather than the grid.
pub fn jsd_matrix(module_ids: &[u32], modules: &[ModuleChannels], policy: &GridPolicy) -> Result<DivergenceMatrix> {
    let w = modules.len();
    if w < 2 {
        return Err(Error::TooFewModules(w));
    }
    if module_ids.len() != w {
        return Err(Error::ShapeMismatch(format!("{} ids for {} modules", module_ids.len(), w)));
    }
    let channels = modules[0].densities.len();
    if modules.iter().any(|m| m.densities.len() != channels || m.samples.len() != channels) {
        return Err(Error::ShapeMismatch("modules carry different channel counts".into()));
    }

    let mut per_channel: Vec<Vec<Slot>> = Vec::new();
    for k in 0..channels {
        let mut pooled: Vec<f64> = modules.iter().flat_map(|m| m.samples[k].iter().cloned()).collect();
        if pooled.is_empty() {
            return Err(Error::EmptyDataset);
        }
        pooled.sort_by(f64::total_cmp);
        let lo = percentile(&pooled, policy.lower_percentile);
        let hi = percentile(&pooled, policy.upper_percentile);
        let scale = pooled[0].abs().max(pooled[pooled.len() - 1].abs()).max(1.0);
        if !(hi - lo > 1e-12 * scale) {
            log::info!("channel {} has no spread across modules; skipped", k + 1);
            continue;
        }
        let slots = modules
            .par_iter()
            .map(|m| match &m.densities[k] {
                ChannelDensity::PointMass(v) => Ok(Slot::Point(*v, 1e-12 * scale)),
                density => discretize_channel(density, lo, hi, policy.points).map(Slot::Grid),
            })
            .collect::<Result<Vec<_>>>()?;
        per_channel.push(slots);
    }

    let pairs: Vec<(usize, usize)> = (0..w).flat_map(|i| (i + 1..w).map(move |j| (i, j))).collect();
    let used = per_channel.len();
    let upper: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if used == 0 {
                return 0.0;
            }
            let sum: f64 = per_channel.iter().map(|c| c[i].jsd(&c[j])).sum();
            sum / used as f64
        })
        .collect();
    let mut values = vec![0.0; w * w];
    for (&(i, j), v) in pairs.iter().zip(upper) {
        values[i * w + j] = v;
        values[j * w + i] = v;
    }
    Ok(DivergenceMatrix {
        module_ids: module_ids.to_vec(),
        values,
    })
}
