//! `fogresnet` command-line interface.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Subject-grouped cross-validation training and ensemble inference of a
/// 1D residual network on 3-axis accelerometer series.
#[derive(Debug, Parser)]
#[command(name = "fogresnet", version)]
struct Cli {
    /// Run configuration (flat TOML); flags override its keys.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic dataset described by the config as CSV files.
    Synth {
        /// Target directory; receives tdcsfog/, defog/ and metadata files.
        #[arg(long)]
        out: PathBuf,
        /// Overrides `synth_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize every series and whether training keeps it.
    Catalog {
        /// Defaults to `<output_dir>/catalog.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assign retained series to subject-grouped, stratified folds.
    Split {
        /// Defaults to `<output_dir>/folds.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `split_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `folds`.
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Train one fold (`--fold 0`) or every fold (`--fold all`).
    Train {
        #[arg(long)]
        fold: commands::FoldSelection,
        /// Fold assignment to use; defaults to `<output_dir>/folds.csv`,
        /// which is created when missing.
        #[arg(long)]
        folds_file: Option<PathBuf>,
        /// Overrides `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `sample_budget`.
        #[arg(long)]
        sample_budget: Option<usize>,
        /// Overrides `batch_size`.
        #[arg(long)]
        batch_size: Option<usize>,
        /// Overrides `eval_stride`.
        #[arg(long)]
        eval_stride: Option<usize>,
    },
    /// Average the probabilities of one or more checkpoints per timepoint.
    Predict {
        /// Checkpoint file; repeat for an ensemble.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// Directory of tdcsfog-format series.
        #[arg(long)]
        tdcsfog: Option<PathBuf>,
        /// Directory of defog-format series.
        #[arg(long)]
        defog: Option<PathBuf>,
        /// Predictions CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Anchor spacing; skipped timepoints repeat the last prediction.
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Score a predictions CSV against labeled series.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        tdcsfog: Option<PathBuf>,
        #[arg(long)]
        defog: Option<PathBuf>,
        /// Metrics CSV to write.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `zero` or `skip`; overrides `undefined_policy`.
        #[arg(long)]
        undefined: Option<String>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<fogresnet::Error> for CliError {
    fn from(e: fogresnet::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fogresnet: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
