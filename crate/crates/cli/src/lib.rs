//! The `octdyn` command-line pipeline: feature extraction, recovery dynamics,
//! logistic modelling, segmentation metrics and the fusion classifier.

pub mod commands;
pub mod config;
pub mod synth;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use octdyn_core::data::DataError;
use octdyn_core::dynamics::DynError;
use octdyn_core::fusion::FusionError;
use octdyn_core::report::ReportError;
use octdyn_core::segmetrics::SegError;
use octdyn_core::stats::StatsError;
use octdyn_core::Stage;
use thiserror::Error;

pub use config::{DpWindow, Profile, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_FATAL: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("{0}")]
    Usage(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("no counterpart for {0}")]
    UnpairedFile(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Dynamics(#[from] DynError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Seg(#[from] SegError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// What a command produced and how many rows it had to skip.
#[derive(Debug, Default)]
pub struct Summary {
    pub outputs: Vec<PathBuf>,
    pub failures: usize,
    pub notes: Vec<String>,
}

impl Summary {
    pub fn exit_code(&self) -> i32 {
        if self.failures == 0 {
            EXIT_OK
        } else {
            EXIT_PARTIAL
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "octdyn", version, about = "Macular-hole OCT prognosis pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    /// Drop dynamic-parameter columns.
    #[arg(long, global = true)]
    pub without_dp: bool,
    /// Prediction horizon: w2, m3, m6 or m12.
    #[arg(long, global = true, value_parser = parse_horizon)]
    pub horizon: Option<Stage>,
    /// Stages feeding the recovery rates.
    #[arg(long, global = true, value_enum)]
    pub dp_window: Option<DpWindow>,
}

fn parse_horizon(s: &str) -> Result<Stage, String> {
    match s.parse::<Stage>()? {
        Stage::Pre => Err("the horizon must be a post-operative stage".into()),
        st => Ok(st),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure every scan in the manifest and write one feature row per eye and stage.
    Extract {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        scan_root: Option<PathBuf>,
    },
    /// Append recovery-rate columns to the preoperative rows.
    Dynamics {
        /// Feature table; defaults to `<out>/features.csv`.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Logistic protocol with and without dynamic parameters at one horizon.
    Fit {
        /// Feature table with dynamics; defaults to `<out>/features_dynamics.csv`.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Per-class segmentation metrics over paired label images.
    Segmetrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Pool pixels (micro) or average per pair (macro).
        #[arg(long, default_value = "micro")]
        aggregation: String,
    },
    /// Train and evaluate the fusion ablation grid; writes a checkpoint.
    TrainFusion {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Superior probability for dataset samples from a checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Only this sample id.
        #[arg(long)]
        sample: Option<String>,
    },
    /// Collect fit and fusion reports from a directory into summary tables.
    Report {
        /// Directory holding `fit_*.json` / `fusion_*.json`; defaults to the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Write the synthetic study fixture.
    Synth {
        #[arg(long, default_value_t = 60)]
        eyes: usize,
    },
}

/// Resolves the effective configuration: file values, then flag overrides, then profile rules.
pub fn resolve_config(common: &Common) -> Result<(RunConfig, Vec<String>), CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(p) = common.profile {
        cfg.profile = p;
    }
    if let Some(w) = common.dp_window {
        cfg.dp_window = w;
    }
    let notes = cfg.enforce_profile();
    Ok((cfg, notes))
}

pub fn run(cli: &Cli) -> Result<Summary, CliError> {
    let (cfg, notes) = resolve_config(&cli.common)?;
    let c = &cli.common;
    let mut summary = match &cli.command {
        Command::Extract { manifest, scan_root } => commands::extract(&cfg, manifest.as_deref(), scan_root.as_deref())?,
        Command::Dynamics { features } => commands::dynamics(&cfg, features.as_deref(), c.horizon)?,
        Command::Fit { features } => commands::fit(&cfg, features.as_deref(), c.horizon, c.without_dp)?,
        Command::Segmetrics { pred, truth, aggregation } => commands::segmetrics(&cfg, pred, truth, aggregation)?,
        Command::TrainFusion { dataset } => commands::train_fusion(&cfg, dataset.as_deref(), c.horizon, c.without_dp)?,
        Command::Predict { checkpoint, dataset, sample } => {
            commands::predict(&cfg, checkpoint, dataset.as_deref(), sample.as_deref())?
        }
        Command::Report { input } => commands::report(&cfg, input.as_deref())?,
        Command::Synth { eyes } => synth::write_fixture(&cfg.out, cfg.seed, *eyes)?,
    };
    summary.notes.splice(0..0, notes);
    Ok(summary)
}
