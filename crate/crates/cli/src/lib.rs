//! Batch driver for lateral controller studies.
//!
//! Every command that produces artifacts writes them into a fresh run
//! directory `<command>-<UTC time>-<config hash>` under the output root,
//! together with a `run_record.json`. `metrics` and `vup` only read files
//! and print their result.

pub mod commands;
pub mod config;
pub mod export;
pub mod record;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

/// Environment variable holding the default output root.
pub const OUTPUT_ENV: &str = "MFCLAB_OUT";
pub const DEFAULT_OUTPUT: &str = "runs";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Simulation(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Simulation(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(format!("I/O error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Internal(format!("CSV error: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "mfclab", version, about = "Path-tracking controller studies: plan, simulate, score, tune, compare")]
pub struct Cli {
    /// Study configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root; run directories are created inside it.
    #[arg(long, global = true, env = OUTPUT_ENV)]
    pub out: Option<PathBuf>,
    /// Base noise seed; trajectory i uses seed + i.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel evaluation.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Controller preset, overriding the configured controller.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan the reference trajectories and write them as CSV.
    Plan,
    /// Simulate the configured controller on every trajectory.
    Simulate,
    /// Score a SimLog CSV.
    Metrics {
        /// SimLog CSV written by `simulate`.
        log: PathBuf,
        /// Also write per-section powers to this CSV.
        #[arg(long)]
        sections: Option<PathBuf>,
    },
    /// Multi-objective tuning of the controller named in `[optimizer]`.
    Optimize {
        /// Continue the study stored in this run directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Volume of the unattained region of the acceptable box for a front CSV.
    Vup {
        /// Front CSV with columns iae, m_eps and m_zeta.
        front: PathBuf,
    },
    /// Run the three reference presets on every trajectory.
    Compare,
}

/// Parses the configuration, applies the global overrides and runs the command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let mut study = match &cli.config {
        Some(path) => config::StudyConfig::load(path)?,
        None => config::StudyConfig::default(),
    };
    if let Some(name) = &cli.preset {
        study.controller = Some(config::preset_config(name)?);
    }
    if let Some(seed) = cli.seed {
        study.sensor.seed = seed;
    }
    let out_root = cli
        .out
        .clone()
        .or_else(|| study.output.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    let ctx = commands::Context { study, out_root };
    match cli.command {
        Command::Plan => commands::plan(&ctx),
        Command::Simulate => commands::simulate(&ctx),
        Command::Metrics { log, sections } => commands::metrics(&ctx, &log, sections.as_deref()),
        Command::Optimize { resume } => commands::optimize(&ctx, resume.as_deref()),
        Command::Vup { front } => commands::vup(&ctx, &front),
        Command::Compare => commands::compare(&ctx),
    }
}
