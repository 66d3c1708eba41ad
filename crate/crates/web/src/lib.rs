//! WebAssembly bindings behind the static demo page in `www/`.
//!
//! Every export takes plain numbers or JSON text and returns JSON text (or a
//! number), so the page needs no generated typings. The `*_json` functions
//! are the same operations for native callers and tests.

use chrono::{Datelike, Timelike};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use pvfault::cvector::{orientation_basis, ChannelDensity};
use pvfault::detector::{detect, DetectSettings, GmmSettings, ReportDocument, ThresholdPolicy};
use pvfault::divergence::{discretize_channel, jsd};
use pvfault::gmm::GaussianMixture;
use pvfault::heatmap::render_svg;
use pvfault::spam::{
    cell_temperature, module_power, simulate_fleet, FaultSpec, ModuleConfig, ThermalModel,
};
use pvfault::weather::{a_vector, exclude_night, Site, SyntheticWeather, WeatherRecord};

const YEAR: i32 = 2016;

fn weather(latitude: f64, longitude: f64, seed: u64) -> Result<Vec<WeatherRecord>, String> {
    let site = Site { latitude, longitude };
    SyntheticWeather::new(YEAR, seed).generate(site).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct Profile {
    tilt: f64,
    azimuth: f64,
    b: [f64; 4],
    b_plus: [f64; 4],
    hours: Vec<u32>,
    power: Vec<f64>,
    c: Vec<[f64; 4]>,
}

/// Hourly power and C vector of one module over one synthetic day.
pub fn daily_profile_json(tilt: f64, azimuth: f64, latitude: f64, day_of_year: u32, seed: u64) -> Result<String, String> {
    let module = ModuleConfig::new(1, tilt, azimuth);
    module.validate().map_err(|e| e.to_string())?;
    let basis = orientation_basis(tilt, azimuth).map_err(|e| e.to_string())?;
    let records = weather(latitude, 0.0, seed)?;
    let day: Vec<&WeatherRecord> = records.iter().filter(|r| r.timestamp.ordinal() == day_of_year).collect();
    if day.is_empty() {
        return Err(format!("day {day_of_year} is not in {YEAR}"));
    }
    let thermal = ThermalModel::default();
    let mut profile = Profile {
        tilt,
        azimuth,
        b: basis.b,
        b_plus: basis.b_plus,
        hours: Vec::new(),
        power: Vec::new(),
        c: Vec::new(),
    };
    for r in day {
        let a = a_vector(r);
        let t_c = cell_temperature(r, thermal);
        let p = if r.sun_zenith < 90.0 { module_power(a, &module, t_c) } else { 0.0 };
        profile.hours.push(r.timestamp.hour());
        profile.power.push(p);
        profile.c.push(basis.b_plus.map(|k| k * p));
    }
    serde_json::to_string(&profile).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FleetRequest {
    modules: Vec<ModuleConfig>,
    #[serde(default)]
    faults: Vec<FaultSpec>,
    #[serde(default = "default_training")]
    training_records: usize,
    #[serde(default = "default_components")]
    components: usize,
    #[serde(default = "default_k")]
    threshold_k: f64,
    #[serde(default = "default_latitude")]
    latitude: f64,
    #[serde(default = "default_seed")]
    seed: u64,
}

fn default_training() -> usize {
    1500
}

fn default_components() -> usize {
    3
}

fn default_k() -> f64 {
    ThresholdPolicy::default().k
}

fn default_latitude() -> f64 {
    45.0
}

fn default_seed() -> u64 {
    2016
}

#[derive(Debug, Serialize)]
struct FleetResponse {
    table: String,
    flagged: Vec<u32>,
    power_flagged: Vec<u32>,
    report: serde_json::Value,
    heatmap_c: String,
    heatmap_power: String,
}

/// Simulates a fleet on synthetic weather, runs detection and returns the
/// report together with both heatmaps.
pub fn run_fleet_json(request: &str) -> Result<String, String> {
    let req: FleetRequest = serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))?;
    if req.components == 0 {
        return Err("components must be at least 1".into());
    }
    let records = exclude_night(&weather(req.latitude, 0.0, req.seed)?);
    let power = simulate_fleet(&records, &req.modules, &req.faults, ThermalModel::default()).map_err(|e| e.to_string())?;
    let settings = DetectSettings {
        seed: req.seed,
        gmm: GmmSettings {
            components: req.components,
            ..GmmSettings::default()
        },
        threshold: ThresholdPolicy { k: req.threshold_k },
        training_records: Some(req.training_records),
        ..DetectSettings::default()
    };
    let detection = detect(&power, &req.modules, &settings).map_err(|e| e.to_string())?;
    let doc = ReportDocument::new(&detection, "browser", req.seed);
    let meta = [("seed", req.seed.to_string())];
    let response = FleetResponse {
        table: doc.report.to_string(),
        flagged: doc.report.by_severity(),
        power_flagged: doc.power_report.by_severity(),
        report: serde_json::from_str(&doc.to_json()).map_err(|e| e.to_string())?,
        heatmap_c: render_svg(&doc.c_matrix, "C vector", &meta),
        heatmap_power: render_svg(&doc.power_matrix, "Output power", &meta),
    };
    serde_json::to_string(&response).map_err(|e| e.to_string())
}

/// JSD in nats between two univariate normals, discretized on `points`
/// cells spanning eight standard deviations around both.
pub fn gaussian_jsd_value(mean_p: f64, sd_p: f64, mean_q: f64, sd_q: f64, points: usize) -> Result<f64, String> {
    if !(sd_p > 0.0 && sd_q > 0.0) {
        return Err("standard deviations must be positive".into());
    }
    let lo = (mean_p - 8.0 * sd_p).min(mean_q - 8.0 * sd_q);
    let hi = (mean_p + 8.0 * sd_p).max(mean_q + 8.0 * sd_q);
    let density = |m: f64, s: f64| -> Result<ChannelDensity, String> {
        let g = GaussianMixture::univariate(&[(1.0, m, s * s)]).map_err(|e| e.to_string())?;
        Ok(ChannelDensity::Mixture(g))
    };
    let p = discretize_channel(&density(mean_p, sd_p)?, lo, hi, points).map_err(|e| e.to_string())?;
    let q = discretize_channel(&density(mean_q, sd_q)?, lo, hi, points).map_err(|e| e.to_string())?;
    jsd(&p, &q).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn daily_profile(tilt: f64, azimuth: f64, latitude: f64, day_of_year: u32, seed: u32) -> Result<String, JsValue> {
    daily_profile_json(tilt, azimuth, latitude, day_of_year, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn run_fleet(request: &str) -> Result<String, JsValue> {
    run_fleet_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn gaussian_jsd(mean_p: f64, sd_p: f64, mean_q: f64, sd_q: f64, points: u32) -> Result<f64, JsValue> {
    gaussian_jsd_value(mean_p, sd_p, mean_q, sd_q, points as usize).map_err(|e| JsValue::from_str(&e))
}
