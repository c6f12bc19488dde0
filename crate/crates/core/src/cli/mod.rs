//! Command-line front end. Every command reads a TOML [`RunConfig`]
//! (defaults when `--config` is omitted), applies `--seed` / `--out`, writes
//! the resolved configuration next to its outputs and exits with
//! [`Error::exit_code`] on failure.

mod commands;
mod config;
pub mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_ablation, cmd_eval, cmd_sweep, cmd_synth_data, cmd_train, splits_for, write_resolved_config, EvalOptions,
    EvalSummaryRow, PcaRow, SweepCsvRow, SynthFile, TrainOutcome, ABLATION_FILE, CHECKPOINT_FILE, EVAL_SUMMARY_FILE,
    SWEEP_FILE, TRAINING_LOG_FILE, VALIDATION_FILE,
};
pub use config::{AblationConfig, DataConfig, DataSourceKind, EvalConfig, RunConfig, RESOLVED_CONFIG_FILE};

use crate::data::Protocol;
use crate::error::{Error, Result};
use crate::eval::WORKERS_ENV;

#[derive(Debug, Parser)]
#[command(
    name = "beam-protonet",
    version,
    about = "Few-shot mmWave beam classification with prototypical networks",
    after_help = "Per-domain evaluation uses BEAM_PROTONET_WORKERS threads (default 1)."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Root seed (overrides `seed`).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct EvalArgs {
    /// Checkpoint to evaluate; defaults to `<out>/checkpoint.safetensors`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Evaluation protocol (overrides `eval.protocol`).
    #[arg(long, value_parser = ["ttsa", "tota"])]
    pub protocol: Option<String>,
    /// Accepted |predicted - true| beam distance (overrides `eval.tolerance`).
    #[arg(long)]
    pub tolerance: Option<usize>,
    /// Also write PNG renderings.
    #[arg(long)]
    pub render: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic domains as HDF5 files.
    SynthData {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Episodic training; writes a checkpoint and the training log.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// k-shot evaluation per domain: summary, confusion, per-class and PCA CSVs.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// Shots per beam (overrides `eval.k`).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Accuracy against the number of shots (`eval.ks`, `eval.repeats`).
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Train and evaluate the four preprocessing configurations.
    Ablation {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn resolve(common: &CommonArgs) -> Result<RunConfig> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.resolve(common.seed, common.out.as_deref())
}

fn protocol(arg: &Option<String>, cfg: &RunConfig) -> Result<Protocol> {
    arg.as_deref().map_or(Ok(cfg.eval.protocol), str::parse)
}

fn checkpoint_path(arg: &Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    arg.clone().unwrap_or_else(|| cfg.out_dir.join(CHECKPOINT_FILE))
}

/// Executes one parsed command.
pub fn run(cli: Cli) -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        if v.parse::<usize>().map_or(true, |n| n == 0) {
            return Err(Error::Config(format!(
                "{WORKERS_ENV} must be a positive integer, got '{v}'"
            )));
        }
    }
    match cli.command {
        Command::SynthData { common } => {
            cmd_synth_data(&resolve(&common)?)?;
        }
        Command::Train { common, checkpoint } => {
            cmd_train(&resolve(&common)?, checkpoint.as_deref())?;
        }
        Command::Eval { common, eval, k } => {
            let cfg = resolve(&common)?;
            let opts = EvalOptions {
                protocol: protocol(&eval.protocol, &cfg)?,
                k: k.unwrap_or(cfg.eval.k),
                tolerance: eval.tolerance.unwrap_or(cfg.eval.tolerance),
                render: eval.render,
            };
            cmd_eval(&cfg, &checkpoint_path(&eval.checkpoint, &cfg), opts)?;
        }
        Command::Sweep { common, eval } => {
            let cfg = resolve(&common)?;
            cmd_sweep(
                &cfg,
                &checkpoint_path(&eval.checkpoint, &cfg),
                protocol(&eval.protocol, &cfg)?,
                eval.tolerance.unwrap_or(cfg.eval.tolerance),
                eval.render,
            )?;
        }
        Command::Ablation { common } => {
            cmd_ablation(&resolve(&common)?)?;
        }
    }
    Ok(())
}

/// Process entry point: parses arguments, runs, maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
