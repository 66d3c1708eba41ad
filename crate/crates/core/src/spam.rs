//! Linearized Sandia array performance model: per-module maximum-power
//! output from the irradiance coefficients, fault injection, and fleet
//! simulation.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weather::{a_vector, format_utc, parse_utc, AVector, WeatherRecord};

/// Open-rack glass/cell/polymer constants of the Sandia thermal model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalModel {
    pub a: f64,
    pub b: f64,
}

impl Default for ThermalModel {
    fn default() -> Self {
        ThermalModel { a: -3.56, b: -0.075 }
    }
}

/// Cell temperature in °C. The same for every module in a fleet, so
/// fault-free modules share it.
pub fn cell_temperature(record: &WeatherRecord, thermal: ThermalModel) -> f64 {
    record.ambient_temp + record.ghi * (thermal.a + thermal.b * record.wind_speed).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleConfig {
    pub id: u32,
    /// Surface tilt, degrees from horizontal.
    pub tilt: f64,
    /// Surface azimuth, degrees from north, clockwise.
    pub azimuth: f64,
    #[serde(default = "defaults::i_mpo")]
    pub i_mpo: f64,
    #[serde(default = "defaults::v_mp")]
    pub v_mp: f64,
    #[serde(default = "defaults::gamma_mp")]
    pub gamma_mp: f64,
    #[serde(default = "defaults::g0")]
    pub g0: f64,
    #[serde(default = "defaults::c_o")]
    pub c_o: f64,
    #[serde(default = "defaults::o")]
    pub o: f64,
}

/// Representative crystalline-silicon coefficients. Only `c_o` and `o`
/// describe the reference fleet; the rest are placeholders to override.
pub mod defaults {
    pub fn i_mpo() -> f64 {
        5.25
    }
    pub fn v_mp() -> f64 {
        30.0
    }
    pub fn gamma_mp() -> f64 {
        -0.0045
    }
    pub fn g0() -> f64 {
        1000.0
    }
    pub fn c_o() -> f64 {
        1.0275
    }
    pub fn o() -> f64 {
        1.0
    }
}

impl ModuleConfig {
    pub fn new(id: u32, tilt: f64, azimuth: f64) -> Self {
        ModuleConfig {
            id,
            tilt,
            azimuth,
            i_mpo: defaults::i_mpo(),
            v_mp: defaults::v_mp(),
            gamma_mp: defaults::gamma_mp(),
            g0: defaults::g0(),
            c_o: defaults::c_o(),
            o: defaults::o(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str| format!("module {} {name}", self.id);
        let finite = [self.tilt, self.azimuth, self.i_mpo, self.v_mp, self.gamma_mp, self.g0, self.c_o, self.o];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(field("coefficients"), "non-finite value"));
        }
        if !(0.0..=90.0).contains(&self.tilt) {
            return Err(Error::invalid(field("tilt"), format!("{} outside [0, 90]", self.tilt)));
        }
        if !(0.0..360.0).contains(&self.azimuth) {
            return Err(Error::invalid(field("azimuth"), format!("{} outside [0, 360)", self.azimuth)));
        }
        for (name, v) in [("i_mpo", self.i_mpo), ("v_mp", self.v_mp), ("g0", self.g0), ("c_o", self.c_o)] {
            if v <= 0.0 {
                return Err(Error::invalid(field(name), format!("{v} must be > 0")));
            }
        }
        if !(self.o > 0.0 && self.o <= 1.0) {
            return Err(Error::invalid(field("o"), format!("{} outside (0, 1]", self.o)));
        }
        Ok(())
    }

    /// Orientation-free power gain `[I_mpo(1 + γ_mp(T_c − 25))/G_0]·V_mp·C_o·O`.
    pub fn power_gain(&self, t_c: f64) -> f64 {
        self.i_mpo * (1.0 + self.gamma_mp * (t_c - 25.0)) / self.g0 * self.v_mp * self.c_o * self.o
    }
}

/// Plane-of-array irradiance for a surface, clamped at zero.
pub fn effective_irradiance(a: AVector, tilt: f64, azimuth: f64) -> f64 {
    let (b, g) = (tilt.to_radians(), azimuth.to_radians());
    let e = a.a1 * b.cos() + a.a2 * b.sin() * g.cos() + a.a3 * b.sin() * g.sin() + a.a4;
    e.max(0.0)
}

/// Maximum-power output in watts.
pub fn module_power(a: AVector, config: &ModuleConfig, t_c: f64) -> f64 {
    config.power_gain(t_c) * effective_irradiance(a, config.tilt, config.azimuth)
}

/// The weather-and-module coefficient vector `A·gain`, whose inner product
/// with the orientation basis is the unclamped power.
pub fn coefficient_vector(a: AVector, config: &ModuleConfig, t_c: f64) -> [f64; 4] {
    let k = config.power_gain(t_c);
    a.to_array().map(|v| v * k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Degradation,
    ShortCircuit,
    SoilingShading,
    OpenCircuit,
}

impl FromStr for FaultKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "degradation" => Ok(FaultKind::Degradation),
            "short_circuit" => Ok(FaultKind::ShortCircuit),
            "soiling_shading" => Ok(FaultKind::SoilingShading),
            "open_circuit" => Ok(FaultKind::OpenCircuit),
            other => Err(Error::UnknownFaultKind(other.to_string())),
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FaultKind::Degradation => "degradation",
            FaultKind::ShortCircuit => "short_circuit",
            FaultKind::SoilingShading => "soiling_shading",
            FaultKind::OpenCircuit => "open_circuit",
        })
    }
}

/// Irradiance channels an open-circuit fault scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrradianceChannels {
    #[default]
    All,
    /// DNI only.
    Beam,
    /// DHI and GHI.
    Diffuse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub target_module: u32,
    #[serde(deserialize_with = "de_fault_kind", serialize_with = "ser_fault_kind")]
    pub kind: FaultKind,
    pub factor: f64,
    #[serde(default)]
    pub channels: IrradianceChannels,
}

fn de_fault_kind<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<FaultKind, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

fn ser_fault_kind<S: serde::Serializer>(k: &FaultKind, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&k.to_string())
}

impl FaultSpec {
    pub fn new(target_module: u32, kind: FaultKind, factor: f64) -> Self {
        FaultSpec {
            target_module,
            kind,
            factor,
            channels: IrradianceChannels::All,
        }
    }

    pub fn with_channels(mut self, channels: IrradianceChannels) -> Self {
        self.channels = channels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.factor.is_finite() || self.factor <= 0.0 {
            return Err(Error::FactorNotPositive(self.factor));
        }
        if self.factor >= 1.0 {
            return Err(Error::FactorTooLarge(self.factor));
        }
        Ok(())
    }
}

/// Per-channel multipliers applied to a module's weather before the
/// irradiance coefficients are formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrradianceScaling {
    pub dni: f64,
    pub dhi: f64,
    pub ghi: f64,
}

impl Default for IrradianceScaling {
    fn default() -> Self {
        IrradianceScaling {
            dni: 1.0,
            dhi: 1.0,
            ghi: 1.0,
        }
    }
}

impl IrradianceScaling {
    pub fn is_identity(&self) -> bool {
        *self == IrradianceScaling::default()
    }
}

/// A module configuration after fault injection.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultedModule {
    pub config: ModuleConfig,
    pub irradiance: IrradianceScaling,
}

impl From<ModuleConfig> for FaultedModule {
    fn from(config: ModuleConfig) -> Self {
        FaultedModule {
            config,
            irradiance: IrradianceScaling::default(),
        }
    }
}

/// Applies one fault. Multiple faults on a module compose multiplicatively.
pub fn inject_fault(module: &FaultedModule, spec: &FaultSpec) -> Result<FaultedModule> {
    spec.validate()?;
    let mut out = module.clone();
    let f = spec.factor;
    match spec.kind {
        FaultKind::Degradation => out.config.c_o *= f,
        FaultKind::ShortCircuit => out.config.v_mp *= f,
        FaultKind::SoilingShading => out.config.o *= f,
        FaultKind::OpenCircuit => {
            let s = &mut out.irradiance;
            match spec.channels {
                IrradianceChannels::All => {
                    s.dni *= f;
                    s.dhi *= f;
                    s.ghi *= f;
                }
                IrradianceChannels::Beam => s.dni *= f,
                IrradianceChannels::Diffuse => {
                    s.dhi *= f;
                    s.ghi *= f;
                }
            }
        }
    }
    Ok(out)
}

/// Time-by-module power samples in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMatrix {
    pub timestamps: Vec<DateTime<Utc>>,
    pub module_ids: Vec<u32>,
    /// Row-major, `timestamps.len()` rows by `module_ids.len()` columns.
    pub values: Vec<f64>,
}

impl PowerMatrix {
    pub fn rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn cols(&self) -> usize {
        self.module_ids.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let w = self.cols();
        &self.values[row * w..(row + 1) * w]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn column_of(&self, id: u32) -> Option<Vec<f64>> {
        self.module_ids.iter().position(|&m| m == id).map(|c| self.column(c))
    }

    /// First `n` rows (all if fewer).
    pub fn head(&self, n: usize) -> PowerMatrix {
        let n = n.min(self.rows());
        PowerMatrix {
            timestamps: self.timestamps[..n].to_vec(),
            module_ids: self.module_ids.clone(),
            values: self.values[..n * self.cols()].to_vec(),
        }
    }

    /// Columns for the given ids, in that order.
    pub fn select(&self, ids: &[u32]) -> Result<PowerMatrix> {
        let idx: Vec<usize> = ids
            .iter()
            .map(|id| {
                self.module_ids
                    .iter()
                    .position(|m| m == id)
                    .ok_or_else(|| Error::ColumnMismatch(format!("no column for module {id}")))
            })
            .collect::<Result<_>>()?;
        let mut values = Vec::with_capacity(self.rows() * idx.len());
        for r in 0..self.rows() {
            values.extend(idx.iter().map(|&c| self.get(r, c)));
        }
        Ok(PowerMatrix {
            timestamps: self.timestamps.clone(),
            module_ids: ids.to_vec(),
            values,
        })
    }

    pub fn scaled(&self, factor: f64) -> PowerMatrix {
        PowerMatrix {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// CSV with a `timestamp` column and one column per module id. Lines
    /// starting with `#` carry provenance and are skipped by the reader.
    pub fn write_csv<W: Write>(&self, mut sink: W, provenance: &[(&str, String)]) -> Result<()> {
        for (k, v) in provenance {
            writeln!(sink, "# {k}={v}").map_err(|e| Error::io("<power csv>", e))?;
        }
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.module_ids.iter().map(|id| id.to_string()));
        w.write_record(&header)?;
        for r in 0..self.rows() {
            let mut rec = vec![format_utc(&self.timestamps[r])];
            rec.extend(self.row(r).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<power csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<PowerMatrix> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(source);
        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("timestamp") {
            return Err(Error::MissingColumn("timestamp".into()));
        }
        let module_ids: Vec<u32> = headers
            .iter()
            .skip(1)
            .map(|h| {
                h.parse().map_err(|_| Error::MalformedRow {
                    row: 1,
                    column: h.to_string(),
                    message: "module column header must be an integer id".into(),
                })
            })
            .collect::<Result<_>>()?;
        let mut timestamps = Vec::new();
        let mut values = Vec::new();
        for row in reader.records() {
            let row = row?;
            let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
            let ts = parse_utc(&row[0]).map_err(|m| Error::MalformedRow {
                row: line,
                column: "timestamp".into(),
                message: m,
            })?;
            timestamps.push(ts);
            for (i, cell) in row.iter().skip(1).enumerate() {
                let v: f64 = cell.parse().map_err(|_| Error::MalformedRow {
                    row: line,
                    column: headers[i + 1].to_string(),
                    message: format!("`{cell}` is not a number"),
                })?;
                values.push(v);
            }
        }
        if timestamps.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(PowerMatrix {
            timestamps,
            module_ids,
            values,
        })
    }
}

/// Resolves each module's configuration after all of its faults.
pub fn apply_faults(configs: &[ModuleConfig], faults: &[FaultSpec]) -> Result<Vec<FaultedModule>> {
    let mut modules: Vec<FaultedModule> = configs.iter().cloned().map(FaultedModule::from).collect();
    for spec in faults {
        let m = modules
            .iter_mut()
            .find(|m| m.config.id == spec.target_module)
            .ok_or_else(|| Error::invalid("fault target_module", format!("no module {}", spec.target_module)))?;
        *m = inject_fault(m, spec)?;
    }
    Ok(modules)
}

/// Evaluates every module at every record. Records are used as given, so
/// callers exclude night hours first.
pub fn simulate_fleet(
    weather: &[WeatherRecord],
    configs: &[ModuleConfig],
    faults: &[FaultSpec],
    thermal: ThermalModel,
) -> Result<PowerMatrix> {
    if configs.is_empty() {
        return Err(Error::NoModules);
    }
    let mut seen = HashSet::new();
    for c in configs {
        c.validate()?;
        if !seen.insert(c.id) {
            return Err(Error::DuplicateModule(c.id));
        }
    }
    let modules = apply_faults(configs, faults)?;
    let w = modules.len();

    let rows: Vec<Vec<f64>> = weather
        .par_iter()
        .map(|record| {
            let t_c = cell_temperature(record, thermal);
            let nominal = a_vector(record);
            modules
                .iter()
                .map(|m| {
                    let a = if m.irradiance.is_identity() {
                        nominal
                    } else {
                        let s = m.irradiance;
                        a_vector(&record.with_irradiance_scaled(s.dni, s.dhi, s.ghi))
                    };
                    module_power(a, &m.config, t_c)
                })
                .collect()
        })
        .collect();

    let mut values = Vec::with_capacity(weather.len() * w);
    for r in rows {
        values.extend(r);
    }
    Ok(PowerMatrix {
        timestamps: weather.iter().map(|r| r.timestamp).collect(),
        module_ids: configs.iter().map(|c| c.id).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn record(dni: f64, dhi: f64, ghi: f64, z: f64, g: f64) -> WeatherRecord {
        WeatherRecord {
            timestamp: Utc.with_ymd_and_hms(2016, 6, 1, 10, 30, 0).unwrap(),
            dni,
            dhi,
            ghi,
            ambient_temp: 20.0,
            wind_speed: 1.0,
            albedo: 0.2,
            sun_zenith: z,
            sun_azimuth: g,
        }
    }

    fn basis(tilt: f64, az: f64) -> [f64; 4] {
        let (b, g) = (tilt.to_radians(), az.to_radians());
        [b.cos(), b.sin() * g.cos(), b.sin() * g.sin(), 1.0]
    }

    #[test]
    fn cell_temperature_examples() {
        let mut r = record(0.0, 0.0, 0.0, 80.0, 90.0);
        assert_eq!(cell_temperature(&r, ThermalModel::default()), 20.0);
        r.ghi = 1000.0;
        let t = cell_temperature(&r, ThermalModel::default());
        assert!((t - (20.0 + 1000.0 * (-3.635f64).exp())).abs() < 1e-12);
        assert!((t - 46.4).abs() < 0.05, "{t}");
    }

    #[test]
    fn effective_irradiance_examples() {
        let a = AVector {
            a1: 300.0,
            a2: -200.0,
            a3: 50.0,
            a4: 120.0,
        };
        assert_eq!(effective_irradiance(a, 0.0, 123.0), 420.0);
        assert_eq!(effective_irradiance(AVector::default(), 35.0, 180.0), 0.0);
        let overhead = AVector {
            a1: 1000.0,
            ..AVector::default()
        };
        assert!((effective_irradiance(overhead, 60.0, 0.0) - 500.0).abs() < 1e-9);
        let negative = AVector {
            a1: -10.0,
            ..AVector::default()
        };
        assert_eq!(effective_irradiance(negative, 0.0, 0.0), 0.0);
    }

    #[test]
    fn reference_temperature_power() {
        let cfg = ModuleConfig::new(1, 30.0, 180.0);
        let a = a_vector(&record(700.0, 120.0, 650.0, 35.0, 170.0));
        let e = effective_irradiance(a, 30.0, 180.0);
        let p = module_power(a, &cfg, 25.0);
        assert!((p - cfg.i_mpo / cfg.g0 * cfg.v_mp * cfg.c_o * cfg.o * e).abs() < 1e-12);
        assert_eq!(module_power(AVector::default(), &cfg, 40.0), 0.0);
    }

    #[test]
    fn fault_examples() {
        let base = FaultedModule::from(ModuleConfig::new(1, 30.0, 180.0));
        let deg = inject_fault(&base, &FaultSpec::new(1, FaultKind::Degradation, 0.8)).unwrap();
        assert!((deg.config.c_o - 0.822).abs() < 1e-12);
        let soil = inject_fault(&base, &FaultSpec::new(1, FaultKind::SoilingShading, 0.85)).unwrap();
        assert_eq!(soil.config.o, 0.85);
        let short = inject_fault(&base, &FaultSpec::new(1, FaultKind::ShortCircuit, 0.8)).unwrap();
        assert_eq!(short.config.v_mp, 24.0);
        let err = inject_fault(&base, &FaultSpec::new(1, FaultKind::Degradation, 1.0)).unwrap_err();
        assert_eq!(err.to_string(), "factor must be < 1 (got 1)");
        assert!(inject_fault(&base, &FaultSpec::new(1, FaultKind::Degradation, 0.0)).is_err());
        let beam = inject_fault(
            &base,
            &FaultSpec::new(1, FaultKind::OpenCircuit, 0.9).with_channels(IrradianceChannels::Beam),
        )
        .unwrap();
        assert_eq!(beam.irradiance, IrradianceScaling { dni: 0.9, dhi: 1.0, ghi: 1.0 });
        let diffuse = inject_fault(
            &base,
            &FaultSpec::new(1, FaultKind::OpenCircuit, 0.85).with_channels(IrradianceChannels::Diffuse),
        )
        .unwrap();
        assert_eq!(diffuse.irradiance, IrradianceScaling { dni: 1.0, dhi: 0.85, ghi: 0.85 });
        assert!(matches!("arc_fault".parse::<FaultKind>(), Err(Error::UnknownFaultKind(_))));
    }

    #[test]
    fn simulate_shapes_and_errors() {
        let dark = vec![record(0.0, 0.0, 0.0, 50.0, 100.0)];
        let m = simulate_fleet(&dark, &[ModuleConfig::new(1, 20.0, 180.0)], &[], ThermalModel::default()).unwrap();
        assert_eq!((m.rows(), m.cols(), m.values.clone()), (1, 1, vec![0.0]));

        let weather = vec![record(700.0, 100.0, 600.0, 40.0, 160.0), record(300.0, 150.0, 350.0, 60.0, 220.0)];
        let twins = [ModuleConfig::new(1, 25.0, 190.0), ModuleConfig::new(2, 25.0, 190.0)];
        let m = simulate_fleet(&weather, &twins, &[], ThermalModel::default()).unwrap();
        assert_eq!(m.column(0), m.column(1));

        let dup = [ModuleConfig::new(3, 25.0, 190.0), ModuleConfig::new(3, 10.0, 90.0)];
        assert!(matches!(simulate_fleet(&weather, &dup, &[], ThermalModel::default()), Err(Error::DuplicateModule(3))));
        assert!(matches!(simulate_fleet(&weather, &[], &[], ThermalModel::default()), Err(Error::NoModules)));
    }

    #[test]
    fn degraded_clone_ratio() {
        let weather: Vec<_> = (0..50)
            .map(|i| record(10.0 * i as f64, 50.0 + i as f64, 20.0 + 12.0 * i as f64, 20.0 + i as f64, 90.0 + 3.0 * i as f64))
            .collect();
        let fleet = [ModuleConfig::new(1, 35.0, 180.0), ModuleConfig::new(2, 35.0, 180.0)];
        let faults = [FaultSpec::new(2, FaultKind::Degradation, 0.8)];
        let m = simulate_fleet(&weather, &fleet, &faults, ThermalModel::default()).unwrap();
        for r in 0..m.rows() {
            let (a, b) = (m.get(r, 0), m.get(r, 1));
            if a > 0.0 {
                assert!((b / a - 0.8).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn power_csv_roundtrip() {
        let weather = vec![record(700.0, 100.0, 600.0, 40.0, 160.0), record(300.0, 150.0, 350.0, 60.0, 220.0)];
        let fleet = [ModuleConfig::new(4, 25.0, 190.0), ModuleConfig::new(9, 40.0, 120.0)];
        let m = simulate_fleet(&weather, &fleet, &[], ThermalModel::default()).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf, &[("seed", "7".into())]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# seed=7\ntimestamp,4,9\n"));
        assert_eq!(PowerMatrix::read_csv(buf.as_slice()).unwrap(), m);
        assert!(PowerMatrix::read_csv("timestamp,1\n2016-01-01T00:00:00Z,abc\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn factorized_form_matches(
            dni in 0.0..1100.0f64, dhi in 0.0..400.0f64, ghi in 0.0..1100.0f64,
            z in 0.0..89.0f64, g in 0.0..360.0f64,
            tilt in 0.0..=90.0f64, az in 0.0..359.9f64, t_c in -10.0..70.0f64,
        ) {
            let cfg = ModuleConfig::new(1, tilt, az);
            let a = a_vector(&record(dni, dhi, ghi, z, g));
            let c = coefficient_vector(a, &cfg, t_c);
            let b = basis(tilt, az);
            let unclamped: f64 = (0..4).map(|i| b[i] * c[i]).sum();
            let p = module_power(a, &cfg, t_c);
            let expected = unclamped.max(0.0);
            prop_assert!((p - expected).abs() <= 1e-12 * expected.abs().max(1e-9) + 1e-12);
        }

        #[test]
        fn power_is_homogeneous_in_irradiance(
            dni in 0.0..1100.0f64, dhi in 0.0..400.0f64, ghi in 0.0..1100.0f64,
            z in 0.0..89.0f64, g in 0.0..360.0f64, k in 0.0..3.0f64,
            tilt in 0.0..=90.0f64, az in 0.0..359.9f64,
        ) {
            let cfg = ModuleConfig::new(1, tilt, az);
            let p1 = module_power(a_vector(&record(dni, dhi, ghi, z, g)), &cfg, 30.0);
            let pk = module_power(a_vector(&record(k * dni, k * dhi, k * ghi, z, g)), &cfg, 30.0);
            prop_assert!((pk - k * p1).abs() <= 1e-9 * (1.0 + pk.abs()));
        }
    }
}
