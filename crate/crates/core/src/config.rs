//! TOML run configuration and fleet files.
//!
//! A run file names a fleet file, a weather source and the fitting,
//! gridding and flagging knobs. Relative paths resolve against the file
//! that mentions them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::{DetectSettings, GmmSettings, ThresholdPolicy};
use crate::divergence::GridPolicy;
use crate::error::{Error, Result};
use crate::spam::{simulate_fleet, FaultSpec, ModuleConfig, PowerMatrix, ThermalModel};
use crate::weather::{exclude_night, parse_weather_csv, ColumnSchema, Site, SyntheticWeather, WeatherRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeatherSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: ColumnSchema,
    },
    Synthetic(SyntheticWeather),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSection {
    pub threshold_k: f64,
}

impl Default for DetectSection {
    fn default() -> Self {
        DetectSection {
            threshold_k: ThresholdPolicy::default().k,
        }
    }
}

fn default_seed() -> u64 {
    2016
}

fn default_training() -> Option<usize> {
    Some(4324)
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub site: Option<Site>,
    pub weather: WeatherSource,
    pub fleet: PathBuf,
    #[serde(default, rename = "fault")]
    pub faults: Vec<FaultSpec>,
    #[serde(default = "default_training")]
    pub training_records: Option<usize>,
    #[serde(default)]
    pub thermal: ThermalModel,
    #[serde(default)]
    pub gmm: GmmSettings,
    #[serde(default)]
    pub grid: GridPolicy,
    #[serde(default)]
    pub detect: DetectSection,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetFile {
    #[serde(rename = "module")]
    pub modules: Vec<ModuleConfig>,
    #[serde(default, rename = "fault")]
    pub faults: Vec<FaultSpec>,
}

impl FleetFile {
    pub fn parse(text: &str) -> Result<Self> {
        let fleet: FleetFile = toml::from_str(text)?;
        if fleet.modules.is_empty() {
            return Err(Error::NoModules);
        }
        for m in &fleet.modules {
            m.validate()?;
        }
        for f in &fleet.faults {
            f.validate()?;
        }
        Ok(fleet)
    }
}

/// A loaded run: the configuration with paths made absolute plus the fleet
/// and every fault it implies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Run {
    pub config: RunConfig,
    pub modules: Vec<ModuleConfig>,
    /// Fleet-file faults first, then run-file faults.
    pub faults: Vec<FaultSpec>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn resolve(base: &Path, path: &Path) -> Result<PathBuf> {
    let full = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
    if !full.exists() {
        return Err(Error::Config(format!("{} does not exist", full.display())));
    }
    Ok(full)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        for f in &config.faults {
            f.validate()?;
        }
        if config.gmm.components == 0 {
            return Err(Error::invalid("gmm.components", "must be at least 1"));
        }
        Ok(config)
    }

    pub fn detect_settings(&self) -> DetectSettings {
        DetectSettings {
            seed: self.seed,
            gmm: self.gmm,
            grid: self.grid,
            threshold: ThresholdPolicy { k: self.detect.threshold_k },
            training_records: self.training_records,
        }
    }
}

impl Run {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut config = RunConfig::parse(&read(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.fleet = resolve(base, &config.fleet)?;
        if let WeatherSource::Csv { path: weather, .. } = &mut config.weather {
            *weather = resolve(base, weather)?;
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        Self::from_config(config)
    }

    /// Builds a run from a config whose paths are already usable.
    pub fn from_config(config: RunConfig) -> Result<Self> {
        let fleet = FleetFile::parse(&read(&config.fleet)?)?;
        let mut faults = fleet.faults;
        faults.extend(config.faults.iter().cloned());
        Ok(Run {
            config,
            modules: fleet.modules,
            faults,
        })
    }

    /// SHA-256 over the canonical JSON of the resolved run, hex encoded.
    /// Directories are left out, so the hash does not depend on where the
    /// files live.
    pub fn config_hash(&self) -> String {
        let file_name = |p: &Path| p.file_name().map(PathBuf::from).unwrap_or_default();
        let mut canonical = self.clone();
        canonical.config.output_dir = PathBuf::new();
        canonical.config.fleet = file_name(&self.config.fleet);
        if let WeatherSource::Csv { path, .. } = &mut canonical.config.weather {
            *path = file_name(path);
        }
        let text = serde_json::to_string(&canonical).expect("run serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Provenance pairs embedded in every output.
    pub fn provenance(&self) -> Vec<(&'static str, String)> {
        vec![("config-hash", self.config_hash()), ("seed", self.config.seed.to_string())]
    }

    /// Every weather record of the source, night hours included.
    pub fn raw_weather(&self) -> Result<Vec<WeatherRecord>> {
        Ok(match &self.config.weather {
            WeatherSource::Csv { path, schema } => {
                let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
                parse_weather_csv(file, schema, self.config.site)?
            }
            WeatherSource::Synthetic(gen) => {
                let site = self
                    .config
                    .site
                    .ok_or_else(|| Error::Config("synthetic weather needs a site".into()))?;
                gen.generate(site)?
            }
        })
    }

    /// Daytime weather records in chronological order.
    pub fn weather(&self) -> Result<Vec<WeatherRecord>> {
        Ok(exclude_night(&self.raw_weather()?))
    }

    pub fn simulate(&self) -> Result<PowerMatrix> {
        simulate_fleet(&self.weather()?, &self.modules, &self.faults, self.config.thermal)
    }
}
