//! Command-line front end for `cellsplit`.
//!
//! [`run`] parses arguments, executes one subcommand and returns the process
//! exit code: 0 on success, 2 for usage errors (including missing input
//! files), 3 for invalid parameters or inputs, 4 for runtime failures.

mod commands;
pub mod config;
mod files;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::PipelineConfig;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Environment variable consulted when no seed is given.
pub const SEED_ENV: &str = "W3_SEED";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Core(#[from] cellsplit::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use cellsplit::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::MissingFile(_)) => EXIT_USAGE,
            CliError::Runtime(_) | CliError::Core(E::Io { .. }) => EXIT_RUNTIME,
            CliError::Validation(_) | CliError::Core(_) => EXIT_VALIDATION,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "cellsplit", version, about = "Three-class cell instance segmentation toolkit")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Instance labels to background/cell/touching classes.
    Gt2sem(Gt2SemArgs),
    /// Per-pixel loss weights.
    Weights(WeightsArgs),
    /// Random augmented copies of one training sample.
    Augment(AugmentArgs),
    /// Weighted cross-entropy of a probability map.
    Loss(LossArgs),
    /// Probability map to instance labels.
    Decode(DecodeArgs),
    /// Panoptic metrics over directories of label maps.
    Eval(EvalArgs),
    /// All local stages driven by a config file.
    Pipeline(PipelineArgs),
    /// Synthetic scenes with ground truth and oracle probabilities.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct Gt2SemArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Neighbourhood radius.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    W3,
    Balanced,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    /// Instance label map.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Precomputed class map; derived from `--gt` when absent.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = WeightKind::W3)]
    pub kind: WeightKind,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub nu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Weight map to carry along; W3 weights are computed when absent.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with augmentation settings.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Instance label map; classes are derived with `--k`.
    #[arg(long, conflicts_with = "classes", required_unless_present = "classes")]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<PathBuf>,
    #[arg(long)]
    pub prob: PathBuf,
    /// Weight map; all ones when absent.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// JSON report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Probability map; several maps are combined first.
    #[arg(long, required = true, num_args = 1..)]
    pub prob: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub params: DecodeFlags,
}

#[derive(Debug, Args, Default)]
pub struct DecodeFlags {
    /// map, th or wt.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau1: Option<f64>,
    #[arg(long)]
    pub min_area: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `paths.out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `paths.probabilities`.
    #[arg(long)]
    pub probabilities: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub decode: DecodeFlags,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    /// Gaussian blur applied to the oracle probabilities.
    #[arg(long, default_value_t = 1.0)]
    pub blur: f64,
}

/// Parses `args` (program name first) and runs the selected command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return err.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n as usize);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| commands::dispatch(cli.command))
}

/// Seed from the flag, then the config, then `W3_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> CliResult<u64> {
    if let Some(seed) = flag.or(config) {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}
