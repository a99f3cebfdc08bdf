//! `simdoa` command line: training, single-shot estimation and experiments.
//!
//! Exit status is 0 on success, 1 when a run fails, and 2 for bad usage,
//! unreadable or invalid configs, and malformed model files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::Error;
use crate::estimator::{estimate, mse};
use crate::experiments::{self, ExperimentKind};
use crate::geometry::ElectricalAngles;
use crate::model_file::TrainedModel;
use crate::protocol::{simulate_with_operator, ProtocolConfig};

pub const THREADS_ENV: &str = "SIMDOA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "simdoa", version, about = "SIM-based 2D DOA estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a SIM to fit the 2D DFT; writes model.txt and train_report.csv.
    Train {
        /// TOML config, or `default` for the reference setup.
        config: PathBuf,
        out_dir: PathBuf,
    },
    /// Simulate one observation through a trained model and print the estimate.
    Estimate(EstimateArgs),
    /// Run an experiment; writes <kind>.csv and <kind>.json.
    Experiment {
        /// TOML config, or `default`.
        config: PathBuf,
        /// convergence, layer_sweep, mse_vs_snr or spectrum.
        kind: ExperimentKind,
        out_dir: PathBuf,
        /// Trained model for mse_vs_snr and spectrum; trained from the
        /// config when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    pub model: PathBuf,
    /// Electrical angle ψ_x in units of π.
    #[arg(long, allow_hyphen_values = true)]
    pub psi_x: f64,
    /// Electrical angle ψ_y in units of π.
    #[arg(long, allow_hyphen_values = true)]
    pub psi_y: f64,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    pub snr_db: f64,
    #[arg(long, default_value_t = 100)]
    pub tx: usize,
    #[arg(long, default_value_t = 100)]
    pub ty: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub noiseless: bool,
}

/// A failed command and the exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(Error),
    Runtime(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => e.fmt(f),
        }
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e)
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e)
}

/// Runs one parsed command, writing any printed output to `stdout`.
pub fn run<W: Write>(cli: Cli, stdout: &mut W) -> Result<(), Failure> {
    match cli.command {
        Command::Train { config, out_dir } => cmd_train(&config, &out_dir),
        Command::Estimate(args) => cmd_estimate(&args, stdout),
        Command::Experiment {
            config,
            kind,
            out_dir,
            model,
        } => cmd_experiment(&config, kind, &out_dir, model.as_deref()),
    }
}

pub fn cmd_train(config: &Path, out_dir: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(config).map_err(usage)?;
    let spec = cfg.spec(ExperimentKind::Convergence).map_err(usage)?;
    let (model, report) = experiments::train_model(&spec).map_err(runtime)?;
    create_dir(out_dir)?;
    let model_path = out_dir.join("model.txt");
    model.save(&model_path).map_err(runtime)?;
    write_with(&out_dir.join("train_report.csv"), |w| report.write_csv(w))
}

#[derive(Debug, Serialize)]
struct EstimateLine {
    n_hat: usize,
    t_hat: usize,
    psi_x_hat: f64,
    psi_y_hat: f64,
    azimuth: Option<f64>,
    elevation: Option<f64>,
    mse: f64,
}

pub fn cmd_estimate<W: Write>(args: &EstimateArgs, stdout: &mut W) -> Result<(), Failure> {
    if !(-1.0..1.0).contains(&args.psi_x) || !(-1.0..1.0).contains(&args.psi_y) {
        return Err(usage(Error::InvalidConfig(
            "--psi-x and --psi-y must lie in [-1, 1)".into(),
        )));
    }
    let cfg = ProtocolConfig {
        t_x: args.tx,
        t_y: args.ty,
        snr_db: args.snr_db,
        noiseless: args.noiseless,
        seed: args.seed,
        ..ProtocolConfig::default()
    };
    cfg.validate().map_err(usage)?;
    let model = TrainedModel::load(&args.model).map_err(usage)?;
    let geom = model.state.geometry();
    let truth = ElectricalAngles::from_pi_units(args.psi_x, args.psi_y);
    let grid =
        simulate_with_operator(geom, &model.effective_operator(), &truth, &cfg).map_err(runtime)?;
    let est = estimate(geom, &grid);
    let (hx, hy) = est.psi_hat.to_pi_units();
    let line = EstimateLine {
        n_hat: est.n_hat,
        t_hat: est.t_hat,
        psi_x_hat: hx,
        psi_y_hat: hy,
        azimuth: est.physical_hat.map(|p| p.azimuth()),
        elevation: est.physical_hat.map(|p| p.elevation()),
        mse: mse(&truth, &est.psi_hat),
    };
    let text = serde_json::to_string(&line).expect("plain struct");
    writeln!(stdout, "{text}").map_err(|e| runtime(Error::io(Path::new("<stdout>"), e)))
}

pub fn cmd_experiment(
    config: &Path,
    kind: ExperimentKind,
    out_dir: &Path,
    model_path: Option<&Path>,
) -> Result<(), Failure> {
    let cfg = RunConfig::load(config).map_err(usage)?;
    let spec = cfg.spec(kind).map_err(usage)?;
    spec.validate().map_err(usage)?;

    let model = match (kind, model_path) {
        (ExperimentKind::MseVsSnr | ExperimentKind::Spectrum, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| usage(Error::io(path, e)))?;
            let model = TrainedModel::from_text(&text).map_err(usage)?;
            if model.state.geometry() != &spec.geometry {
                return Err(usage(Error::InvalidConfig(
                    "model layout differs from the config geometry".into(),
                )));
            }
            Some((model, Some(hex_sha256(&text))))
        }
        (ExperimentKind::MseVsSnr | ExperimentKind::Spectrum, None) => {
            let (model, _) = experiments::train_model(&spec).map_err(runtime)?;
            Some((model, None))
        }
        _ => None,
    };

    create_dir(out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", kind.name()));
    let summary = match kind {
        ExperimentKind::Convergence => {
            let curves = experiments::run_convergence(&spec).map_err(runtime)?;
            write_with(&csv_path, |w| {
                experiments::write_convergence_csv(&curves, w)
            })?;
            let rows: Vec<_> = curves
                .iter()
                .map(|c| {
                    json!({
                        "decay": c.decay,
                        "final_normalized_loss": c.report.final_normalized_loss(),
                        "iterations": c.report.iterations_run,
                        "converged": c.report.converged,
                    })
                })
                .collect();
            json!(rows)
        }
        ExperimentKind::LayerSweep => {
            let points = experiments::run_layer_sweep(&spec).map_err(runtime)?;
            write_with(&csv_path, |w| experiments::write_sweep_csv(&points, w))?;
            json!(points)
        }
        ExperimentKind::MseVsSnr => {
            let (model, _) = model.as_ref().expect("loaded above");
            let points = experiments::run_mse_vs_snr(&spec, model).map_err(runtime)?;
            write_with(&csv_path, |w| experiments::write_mse_csv(&points, w))?;
            json!(points)
        }
        ExperimentKind::Spectrum => {
            let (model, _) = model.as_ref().expect("loaded above");
            let cases = experiments::run_spectrum(&spec, model).map_err(runtime)?;
            let pcfg = experiments::spectrum_config(&spec);
            write_with(&csv_path, |w| {
                experiments::write_spectrum_csv(&cases, &spec.geometry, &pcfg, w)
            })?;
            json!(cases)
        }
    };

    let sidecar = json!({
        "kind": kind.name(),
        "seed": cfg.seed,
        "geometry_digest": spec.geometry.digest(),
        "model_sha256": model.as_ref().and_then(|(_, h)| h.clone()),
        "config": cfg,
        "summary": summary,
    });
    let json_path = out_dir.join(format!("{}.json", kind.name()));
    write_with(&json_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &sidecar).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

/// Pulls the config back out of an experiment sidecar.
pub fn config_from_sidecar(text: &str) -> crate::Result<RunConfig> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    let config = value
        .get("config")
        .ok_or_else(|| Error::ConfigParse("sidecar has no `config`".into()))?;
    RunConfig::from_json_str(&config.to_string())
}

fn hex_sha256(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| runtime(Error::io(dir, e)))
}

fn write_with<F>(path: &Path, body: F) -> Result<(), Failure>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let file = File::create(path).map_err(|e| runtime(Error::io(path, e)))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| runtime(Error::io(path, e)))
}

/// Sizes the global thread pool from `SIMDOA_THREADS`, if set.
pub fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| {
            usage(Error::InvalidConfig(format!(
                "{THREADS_ENV} must be a positive integer, got `{value}`"
            )))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| runtime(Error::InvalidConfig(e.to_string())))
}
