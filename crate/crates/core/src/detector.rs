//! Majority-divergence fault flags and the end-to-end detection pipeline.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cvector::{c_series, fit_channel, orientation_basis, ChannelDensity};
use crate::divergence::{jsd_matrix, DivergenceMatrix, GridPolicy, ModuleChannels};
use crate::error::{Error, Result};
use crate::gmm::{em_fit, EmOptions};
use crate::spam::{ModuleConfig, PowerMatrix};

/// Consistency constant that makes the MAD estimate the standard deviation
/// of a normal sample.
pub const MAD_SCALE: f64 = 1.4826;

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median of each row with the diagonal left out.
pub fn majority_statistic(matrix: &DivergenceMatrix) -> Result<Vec<f64>> {
    let w = matrix.size();
    if w < 3 {
        return Err(Error::MajorityUndefined(w));
    }
    Ok((0..w)
        .map(|i| {
            let off: Vec<f64> = (0..w).filter(|&j| j != i).map(|j| matrix.get(i, j)).collect();
            median(&off)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdPolicy {
    pub k: f64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy { k: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDescriptor {
    pub statistic: String,
    pub rule: String,
    pub k: f64,
    pub median: f64,
    /// Scaled median absolute deviation.
    pub mad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleVerdict {
    pub id: u32,
    pub majority_jsd: f64,
    pub flagged: bool,
    /// 1 is the most severe; only flagged modules are ranked.
    pub severity_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultReport {
    pub modules: Vec<ModuleVerdict>,
    pub threshold: f64,
    pub policy: PolicyDescriptor,
}

impl FaultReport {
    pub fn flagged(&self) -> Vec<u32> {
        self.modules.iter().filter(|m| m.flagged).map(|m| m.id).collect()
    }

    /// Flagged ids from most to least severe.
    pub fn by_severity(&self) -> Vec<u32> {
        let mut ranked: Vec<_> = self.modules.iter().filter_map(|m| m.severity_rank.map(|r| (r, m.id))).collect();
        ranked.sort();
        ranked.into_iter().map(|(_, id)| id).collect()
    }

    pub fn rank_of(&self, id: u32) -> Option<usize> {
        self.modules.iter().find(|m| m.id == id).and_then(|m| m.severity_rank)
    }
}

impl fmt::Display for FaultReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>8}  {:>14}  {:>7}  {:>8}", "module", "majority_jsd", "flagged", "severity")?;
        for m in &self.modules {
            let rank = m.severity_rank.map_or_else(|| "-".to_string(), |r| r.to_string());
            let flag = if m.flagged { "yes" } else { "no" };
            writeln!(f, "{:>8}  {:>14.6e}  {:>7}  {:>8}", m.id, m.majority_jsd, flag, rank)?;
        }
        writeln!(f, "threshold {:.6e} nats ({})", self.threshold, self.policy.rule)?;
        let order = self.by_severity();
        if order.is_empty() {
            write!(f, "no faults detected")
        } else {
            let ids: Vec<String> = order.iter().map(u32::to_string).collect();
            write!(f, "faulty modules by severity: {}", ids.join(", "))
        }
    }
}

/// Flags modules whose statistic exceeds `median + k·1.4826·MAD`.
pub fn flag_faults(module_ids: &[u32], stats: &[f64], policy: &ThresholdPolicy) -> Result<FaultReport> {
    if stats.is_empty() {
        return Err(Error::NoModules);
    }
    if module_ids.len() != stats.len() {
        return Err(Error::ShapeMismatch(format!("{} ids for {} statistics", module_ids.len(), stats.len())));
    }
    let med = median(stats);
    let deviations: Vec<f64> = stats.iter().map(|s| (s - med).abs()).collect();
    let mad = MAD_SCALE * median(&deviations);
    let threshold = med + policy.k * mad;

    let mut modules: Vec<ModuleVerdict> = module_ids
        .iter()
        .zip(stats)
        .map(|(&id, &s)| ModuleVerdict {
            id,
            majority_jsd: s,
            flagged: s > threshold,
            severity_rank: None,
        })
        .collect();
    let mut order: Vec<usize> = (0..modules.len()).filter(|&i| modules[i].flagged).collect();
    order.sort_by(|&a, &b| {
        modules[b]
            .majority_jsd
            .total_cmp(&modules[a].majority_jsd)
            .then(modules[a].id.cmp(&modules[b].id))
    });
    for (rank, &i) in order.iter().enumerate() {
        modules[i].severity_rank = Some(rank + 1);
    }
    Ok(FaultReport {
        modules,
        threshold,
        policy: PolicyDescriptor {
            statistic: "median off-diagonal JSD (nats)".into(),
            rule: "statistic > median + k * 1.4826 * MAD".into(),
            k: policy.k,
            median: med,
            mad,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmSettings {
    pub components: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GmmSettings {
    fn default() -> Self {
        let d = EmOptions::default();
        GmmSettings {
            components: d.components,
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }
}

impl GmmSettings {
    pub fn options(&self, seed: u64) -> EmOptions {
        EmOptions {
            components: self.components,
            seed,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSettings {
    pub seed: u64,
    pub gmm: GmmSettings,
    pub grid: GridPolicy,
    pub threshold: ThresholdPolicy,
    /// Leading daytime records used for fitting; `None` uses all of them.
    pub training_records: Option<usize>,
}

impl Default for DetectSettings {
    fn default() -> Self {
        DetectSettings {
            seed: 2016,
            gmm: GmmSettings::default(),
            grid: GridPolicy::default(),
            threshold: ThresholdPolicy::default(),
            training_records: Some(4324),
        }
    }
}

/// Seed for the 1-D fit of channel `k` of a module.
fn channel_seed(seed: u64, id: u32, k: usize) -> u64 {
    seed.wrapping_add(1 + 4 * id as u64 + k as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub training_records: usize,
    pub power_matrix: DivergenceMatrix,
    pub c_matrix: DivergenceMatrix,
    /// Flags from the raw-power divergences, for comparison.
    pub power_report: FaultReport,
    /// Flags from the C-channel divergences; the detector's verdict.
    pub report: FaultReport,
}

fn check_columns(power: &PowerMatrix, configs: &[ModuleConfig]) -> Result<()> {
    let configured: HashSet<u32> = configs.iter().map(|c| c.id).collect();
    let present: HashSet<u32> = power.module_ids.iter().cloned().collect();
    let mut problems = Vec::new();
    let mut missing: Vec<u32> = configured.difference(&present).cloned().collect();
    missing.sort();
    let mut extra: Vec<u32> = present.difference(&configured).cloned().collect();
    extra.sort();
    if !missing.is_empty() {
        problems.push(format!("missing from power data: {missing:?}"));
    }
    if !extra.is_empty() {
        problems.push(format!("not in fleet config: {extra:?}"));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::ColumnMismatch(problems.join("; ")))
    }
}

/// Fit → C transform → divergence → flag for one fleet.
///
/// Raw-power densities are the marginals of one joint mixture over every
/// module. C densities are 1-D mixtures fit per module and channel.
pub fn detect(power: &PowerMatrix, configs: &[ModuleConfig], settings: &DetectSettings) -> Result<Detection> {
    if configs.is_empty() {
        return Err(Error::NoModules);
    }
    check_columns(power, configs)?;
    let by_id: HashMap<u32, &ModuleConfig> = configs.iter().map(|c| (c.id, c)).collect();
    let data = match settings.training_records {
        Some(n) if n < power.rows() => power.head(n),
        _ => power.clone(),
    };
    let (t, w) = (data.rows(), data.cols());
    if t == 0 {
        return Err(Error::EmptyDataset);
    }
    let ids = data.module_ids.clone();

    let joint = DMatrix::from_row_slice(t, w, &data.values);
    let fit = em_fit(&joint, &settings.gmm.options(settings.seed))?;
    let power_channels: Vec<ModuleChannels> = (0..w)
        .map(|j| {
            Ok(ModuleChannels {
                densities: vec![ChannelDensity::Mixture(fit.mixture.marginal(&[j])?)],
                samples: vec![data.column(j)],
            })
        })
        .collect::<Result<_>>()?;

    let c_channels: Vec<ModuleChannels> = (0..w)
        .into_par_iter()
        .map(|j| {
            let cfg = by_id[&ids[j]];
            let basis = orientation_basis(cfg.tilt, cfg.azimuth)?;
            let series = c_series(cfg.id, &data.column(j), &[], &basis);
            let samples: Vec<Vec<f64>> = (0..4).map(|k| series.channel(k)).collect();
            let densities = (0..4)
                .map(|k| {
                    let opts = settings.gmm.options(channel_seed(settings.seed, cfg.id, k));
                    fit_channel(&samples[k], &opts)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ModuleChannels { densities, samples })
        })
        .collect::<Result<_>>()?;

    let power_matrix = jsd_matrix(&ids, &power_channels, &settings.grid)?;
    let c_matrix = jsd_matrix(&ids, &c_channels, &settings.grid)?;
    let power_report = flag_faults(&ids, &majority_statistic(&power_matrix)?, &settings.threshold)?;
    let report = flag_faults(&ids, &majority_statistic(&c_matrix)?, &settings.threshold)?;
    Ok(Detection {
        training_records: t,
        power_matrix,
        c_matrix,
        power_report,
        report,
    })
}

/// Runs [`detect`] separately for each group. `groups` maps a group name to
/// its module ids; results come back in name order.
pub fn grouped_detection(
    power: &PowerMatrix,
    configs: &[ModuleConfig],
    groups: &BTreeMap<String, Vec<u32>>,
    settings: &DetectSettings,
) -> Result<Vec<(String, Detection)>> {
    let mut owner: HashMap<u32, &str> = HashMap::new();
    for (name, members) in groups {
        if members.len() < 3 {
            return Err(Error::GroupTooSmall {
                group: name.clone(),
                size: members.len(),
            });
        }
        for id in members {
            if owner.insert(*id, name).is_some() {
                return Err(Error::DuplicateModule(*id));
            }
        }
    }
    for c in configs {
        if !owner.contains_key(&c.id) {
            return Err(Error::Ungrouped(c.id));
        }
    }
    check_columns(power, configs)?;
    groups
        .par_iter()
        .map(|(name, members)| {
            let sub_power = power.select(members)?;
            let sub_configs: Vec<ModuleConfig> = members
                .iter()
                .map(|id| {
                    configs
                        .iter()
                        .find(|c| c.id == *id)
                        .cloned()
                        .ok_or_else(|| Error::ColumnMismatch(format!("group `{name}` names unknown module {id}")))
                })
                .collect::<Result<_>>()?;
            Ok((name.clone(), detect(&sub_power, &sub_configs, settings)?))
        })
        .collect()
}

/// The persisted form of a detection run, as written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub training_records: usize,
    /// Verdict from the C-channel divergences.
    pub report: FaultReport,
    /// Same policy applied to the raw-power divergences.
    pub power_report: FaultReport,
    pub c_matrix: DivergenceMatrix,
    pub power_matrix: DivergenceMatrix,
}

pub const REPORT_FORMAT: &str = "pvfault.report/1";

impl ReportDocument {
    pub fn new(detection: &Detection, config_hash: &str, seed: u64) -> Self {
        ReportDocument {
            format: REPORT_FORMAT.into(),
            config_hash: config_hash.into(),
            seed,
            training_records: detection.training_records,
            report: detection.report.clone(),
            power_report: detection.power_report.clone(),
            c_matrix: detection.c_matrix.clone(),
            power_matrix: detection.power_matrix.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ReportDocument = serde_json::from_str(text)?;
        if doc.format != REPORT_FORMAT {
            return Err(Error::UnsupportedFormat(doc.format));
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(w: usize, f: impl Fn(usize, usize) -> f64) -> DivergenceMatrix {
        DivergenceMatrix {
            module_ids: (1..=w as u32).collect(),
            values: (0..w * w).map(|k| if k / w == k % w { 0.0 } else { f(k / w, k % w) }).collect(),
        }
    }

    #[test]
    fn majority_examples() {
        assert_eq!(majority_statistic(&matrix(5, |_, _| 0.0)).unwrap(), vec![0.0; 5]);
        let d = 0.3;
        let m = matrix(6, |i, j| if i == 0 || j == 0 { d } else { 0.0 });
        let s = majority_statistic(&m).unwrap();
        assert_eq!(s[0], d);
        assert!(s[1..].iter().all(|&v| v == 0.0));
        assert!(matches!(majority_statistic(&matrix(2, |_, _| 0.1)), Err(Error::MajorityUndefined(2))));
    }

    #[test]
    fn flag_examples() {
        let ids: Vec<u32> = (1..=16).collect();
        let r = flag_faults(&ids, &[0.2; 16], &ThresholdPolicy::default()).unwrap();
        assert!(r.flagged().is_empty());
        assert!(r.to_string().ends_with("no faults detected"));
        let mut stats = vec![0.0; 16];
        stats[15] = 0.5;
        let r = flag_faults(&ids, &stats, &ThresholdPolicy::default()).unwrap();
        assert_eq!(r.flagged(), vec![16]);
        assert_eq!(r.rank_of(16), Some(1));
    }

    #[test]
    fn severity_ties_break_by_id() {
        let ids = [7, 3, 5, 1, 2, 4, 6, 8];
        let stats = [0.9, 0.9, 0.5, 0.0, 0.01, 0.02, 0.0, 0.01];
        let r = flag_faults(&ids, &stats, &ThresholdPolicy::default()).unwrap();
        assert_eq!(r.by_severity(), vec![3, 7, 5]);
        for m in &r.modules {
            assert_eq!(m.flagged, m.majority_jsd > r.threshold);
        }
    }

    #[test]
    fn report_json_roundtrip() {
        let r = flag_faults(&[1, 2, 3], &[0.1, 0.0, 0.2], &ThresholdPolicy { k: 1.0 }).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<FaultReport>(&text).unwrap(), r);
    }
}
