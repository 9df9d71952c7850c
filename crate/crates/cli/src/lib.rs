//! Command-line driver: dataset generation, training, evaluation, attention
//! export and comparison with published benchmark numbers.

pub mod attention;
mod commands;
pub mod config;
pub mod fixtures;
pub mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::{
    cmd_compare, cmd_eval, cmd_export_attention, cmd_gen_data, cmd_train, GenDataSummary, TrainSummary, CHECKPOINT_FILE,
    EVAL_LOG_FILE, LOSS_LOG_FILE, REPORT_FILE,
};
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    /// 1 usage or config, 2 runtime failure, 3 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::Runtime(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mvloc", version, about = "Multi-scene language-guided camera pose regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set train.lr0=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic dataset under `data.root`.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset seed; overrides `data.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train on the dataset under `data.root`, writing logs and checkpoints to the output directory.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Evaluate a checkpoint on a dataset and write the metrics report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Report path; a human-readable table is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a metrics report with a published results table.
    Compare {
        #[arg(long)]
        report: PathBuf,
        /// `7scenes` or `cambridge`.
        #[arg(long)]
        fixture: String,
        #[arg(long, default_value = fixtures::REFERENCE_METHOD)]
        method: String,
    },
    /// Write per-layer, per-head attention maps of one sample as PGM files.
    ExportAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Sample index in dataset order.
        #[arg(long)]
        sample: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Runtime(e.to_string());
    match command {
        Command::GenData { cfg, seed } => {
            let config = RunConfig::load(cfg.config.as_deref(), &cfg.set)?;
            let s = cmd_gen_data(&config, seed)?;
            writeln!(out, "dataset {}", s.root.display()).map_err(io)?;
            writeln!(out, "scenes {} samples {}", s.scenes, s.samples).map_err(io)?;
            writeln!(out, "digest {}", s.digest).map_err(io)?;
        }
        Command::Train { cfg } => {
            let config = RunConfig::load(cfg.config.as_deref(), &cfg.set)?;
            let s = cmd_train(&config)?;
            writeln!(out, "steps {}", s.steps).map_err(io)?;
            writeln!(out, "final loss {:e} alpha {:e} beta {:e}", s.final_loss, s.alpha, s.beta).map_err(io)?;
            writeln!(out, "checkpoint {}", s.checkpoint.display()).map_err(io)?;
        }
        Command::Eval { checkpoint, data, out: path } => {
            let r = cmd_eval(&checkpoint, &data, &path)?;
            write!(out, "{}", report::format_table(&r)).map_err(io)?;
        }
        Command::Compare { report, fixture, method } => {
            let (_, text) = cmd_compare(&report, &fixture, &method)?;
            write!(out, "{text}").map_err(io)?;
        }
        Command::ExportAttention {
            checkpoint,
            data,
            sample,
            out: dir,
        } => {
            for p in cmd_export_attention(&checkpoint, &data, sample, &dir)? {
                writeln!(out, "{}", p.display()).map_err(io)?;
            }
        }
    }
    Ok(())
}
