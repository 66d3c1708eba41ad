use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nalgebra::DMatrix;

use pvfault::config::Run;
use pvfault::detector::{detect, Detection, ReportDocument};
use pvfault::gmm::em_fit;
use pvfault::heatmap::render_svg;
use pvfault::spam::PowerMatrix;
use pvfault::weather::write_weather_csv;

/// Fault detection for PV fleets with mixed orientations.
#[derive(Debug, Parser)]
#[command(name = "pvfault", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the fitting seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Where outputs go; overrides `output_dir` from the config.
    #[arg(long, global = true, env = "PVFAULT_OUT_DIR")]
    out_dir: Option<PathBuf>,

    /// Overrides the number of mixture components.
    #[arg(long, global = true)]
    components: Option<usize>,

    /// Overrides the flagging threshold multiplier.
    #[arg(long, global = true)]
    threshold_k: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the fleet and write power.csv and manifest.json.
    Simulate,
    /// Fit, transform, compare and flag. Exits 2 when any module is flagged.
    Detect {
        /// Power CSV to analyse; simulated from the config when omitted.
        #[arg(long)]
        power: Option<PathBuf>,
    },
    /// Print a saved report as a table and redraw its heatmaps.
    Report {
        /// A report.json written by `detect`.
        report: PathBuf,
    },
    /// Fit the joint power mixture only and write gmm.json.
    Fit {
        #[arg(long)]
        power: Option<PathBuf>,
    },
    /// Write the raw-power and C divergence matrices only.
    Divergence {
        #[arg(long)]
        power: Option<PathBuf>,
    },
    /// Write the configured weather source as a CSV, night hours included.
    Weather,
}

fn load_run(cli: &Cli) -> Result<Run> {
    let path = cli.config.as_ref().context("--config is required for this command")?;
    let mut run = Run::load(path)?;
    let c = &mut run.config;
    if let Some(seed) = cli.seed {
        c.seed = seed;
    }
    if let Some(m) = cli.components {
        if m == 0 {
            bail!("--components must be at least 1");
        }
        c.gmm.components = m;
    }
    if let Some(k) = cli.threshold_k {
        c.detect.threshold_k = k;
    }
    if let Some(dir) = &cli.out_dir {
        c.output_dir = dir.clone();
    }
    Ok(run)
}

fn out_dir(run: &Run) -> Result<PathBuf> {
    let dir = run.config.output_dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(BufWriter::new(f))
}

fn power_for(run: &Run, power: &Option<PathBuf>) -> Result<PowerMatrix> {
    match power {
        Some(path) => {
            let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            PowerMatrix::read_csv(f).with_context(|| format!("parsing {}", path.display()))
        }
        None => Ok(run.simulate()?),
    }
}

fn provenance_json(run: &Run) -> serde_json::Value {
    serde_json::json!({ "config_hash": run.config_hash(), "seed": run.config.seed })
}

fn simulate(run: &Run) -> Result<()> {
    let dir = out_dir(run)?;
    let power = run.simulate()?;
    power.write_csv(create(&dir.join("power.csv"))?, &run.provenance())?;
    let manifest = serde_json::json!({
        "config_hash": run.config_hash(),
        "seed": run.config.seed,
        "records": power.rows(),
        "modules": power.module_ids,
        "run": run,
    });
    write_file(&dir.join("manifest.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    println!("simulated {} daytime records for {} modules", power.rows(), power.cols());
    Ok(())
}

fn write_matrices(run: &Run, dir: &Path, d: &Detection) -> Result<()> {
    let prov = run.provenance();
    d.power_matrix.write_csv(create(&dir.join("jsd_power.csv"))?, &prov)?;
    d.c_matrix.write_csv(create(&dir.join("jsd_c.csv"))?, &prov)?;
    Ok(())
}

fn heatmaps(dir: &Path, doc: &ReportDocument) -> Result<()> {
    let meta = [("config-hash", doc.config_hash.clone()), ("seed", doc.seed.to_string())];
    write_file(
        &dir.join("heatmap_power.svg"),
        &render_svg(&doc.power_matrix, "JSD between modules: output power", &meta),
    )?;
    write_file(
        &dir.join("heatmap_c.svg"),
        &render_svg(&doc.c_matrix, "JSD between modules: C vector", &meta),
    )
}

fn run_detect(run: &Run, power: &Option<PathBuf>) -> Result<bool> {
    let dir = out_dir(run)?;
    let data = power_for(run, power)?;
    let detection = detect(&data, &run.modules, &run.config.detect_settings())?;
    let doc = ReportDocument::new(&detection, &run.config_hash(), run.config.seed);
    write_file(&dir.join("report.json"), &doc.to_json())?;
    write_matrices(run, &dir, &detection)?;
    heatmaps(&dir, &doc)?;
    println!("{}", doc.report);
    Ok(!doc.report.flagged().is_empty())
}

fn report(path: &Path, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc = ReportDocument::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    println!("{}", doc.report);
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    heatmaps(&dir, &doc)
}

fn fit(run: &Run, power: &Option<PathBuf>) -> Result<()> {
    let dir = out_dir(run)?;
    let data = power_for(run, power)?;
    let data = match run.config.training_records {
        Some(n) if n < data.rows() => data.head(n),
        _ => data,
    };
    let samples = DMatrix::from_row_slice(data.rows(), data.cols(), &data.values);
    let result = em_fit(&samples, &run.config.gmm.options(run.config.seed))?;
    let mixture: serde_json::Value = serde_json::from_str(&result.mixture.to_json())?;
    let doc = serde_json::json!({
        "provenance": provenance_json(run),
        "module_ids": data.module_ids,
        "iterations": result.iterations,
        "converged": result.converged,
        "log_likelihood": result.log_likelihood(),
        "mixture": mixture,
    });
    write_file(&dir.join("gmm.json"), &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    println!(
        "fitted {} components over {} modules in {} iterations (log-likelihood {:.6e})",
        result.mixture.num_components(),
        data.cols(),
        result.iterations,
        result.log_likelihood()
    );
    Ok(())
}

fn divergence(run: &Run, power: &Option<PathBuf>) -> Result<()> {
    let dir = out_dir(run)?;
    let data = power_for(run, power)?;
    let detection = detect(&data, &run.modules, &run.config.detect_settings())?;
    write_matrices(run, &dir, &detection)?;
    println!(
        "mean off-diagonal JSD: power {:.6e}, C {:.6e}",
        detection.power_matrix.mean_off_diagonal(),
        detection.c_matrix.mean_off_diagonal()
    );
    Ok(())
}

fn weather(run: &Run) -> Result<()> {
    let dir = out_dir(run)?;
    let records = run.raw_weather()?;
    write_weather_csv(create(&dir.join("weather.csv"))?, &records)?;
    println!("wrote {} weather records", records.len());
    Ok(())
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Simulate => simulate(&load_run(cli)?)?,
        Command::Detect { power } => {
            let flagged = run_detect(&load_run(cli)?, power)?;
            return Ok(ExitCode::from(if flagged { 2 } else { 0 }));
        }
        Command::Report { report: path } => report(path, cli.out_dir.as_deref())?,
        Command::Fit { power } => fit(&load_run(cli)?, power)?,
        Command::Divergence { power } => divergence(&load_run(cli)?, power)?,
        Command::Weather => weather(&load_run(cli)?)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
