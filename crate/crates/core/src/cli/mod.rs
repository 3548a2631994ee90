//! Batch front-end: `scale`, `complete`, `evaluate` and `filter`.
//!
//! Every command reads rating triples, writes CSV outputs plus a
//! `summary.txt` into `--output`, and prints the same summary line on
//! stdout. Summary lines are space-separated `key=value` pairs. Floats are
//! written as the shortest decimal that round-trips, so identical runs
//! produce identical bytes.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 input parse or usage error,
//! 3 convergence failure or divergence, 4 degenerate input, 5 infeasible
//! mask, 6 every user flagged.

mod commands;

use std::ffi::OsString;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use commands::{cmd_complete, cmd_evaluate, cmd_filter, cmd_scale};

use crate::completion::CrossComponentPolicy;
use crate::eval::EvalError;
use crate::matrix::{CsvOptions, Delimiter, MatrixError};
use crate::scaling::{BalanceConfig, Gauge, ScalingError, ScalingKind};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub gauge: Gauge,
    pub cross_component: CrossComponentPolicy,
    pub mask_fraction: f64,
    pub seed: u64,
    pub outlier_threshold: f64,
    pub delimiter: Delimiter,
    pub has_header: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 1000,
            gauge: Gauge::Symmetric,
            cross_component: CrossComponentPolicy::Refuse,
            mask_fraction: 0.2,
            seed: 42,
            outlier_threshold: 0.5,
            delimiter: Delimiter::Auto,
            has_header: false,
        }
    }
}

impl RunConfig {
    pub fn balance(&self) -> BalanceConfig {
        BalanceConfig {
            tol: self.tol,
            max_iters: self.max_iters,
            gauge: self.gauge,
        }
    }

    pub fn csv(&self) -> CsvOptions {
        CsvOptions {
            delimiter: self.delimiter,
            has_header: self.has_header,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("parse error: {0}")]
    Parse(#[from] MatrixError),
    #[error("{0}")]
    Scaling(#[from] ScalingError),
    #[error("{0}")]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Internal(_) => 1,
            CliError::Usage(_) | CliError::Parse(_) => 2,
            CliError::Scaling(e) => scaling_code(e),
            CliError::Eval(e) => match e {
                EvalError::Scaling(s) => scaling_code(s),
                EvalError::InvalidFraction(_)
                | EvalError::TooFewPositive(_)
                | EvalError::EmptyMask { .. }
                | EvalError::InfeasibleMask { .. }
                | EvalError::InvalidMask { .. } => 5,
                EvalError::AllUsersFlagged { .. } => 6,
                EvalError::InvalidThreshold(_) => 2,
                EvalError::Completion(_) => 1,
            },
        }
    }

    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn scaling_code(e: &ScalingError) -> i32 {
    match e {
        ScalingError::InvalidConfig(_) => 2,
        e if e.is_degenerate() => 4,
        ScalingError::DimensionMismatch { .. } | ScalingError::MissingFactor { .. } => 1,
        _ => 3,
    }
}

#[derive(Debug, Parser)]
#[command(name = "unitcomplete", version, about = "Scale-consistent completion of rating matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute row and column scaling factors.
    Scale {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = KindArg::Rz)]
        kind: KindArg,
    },
    /// Predict every missing cell.
    Complete { input: PathBuf },
    /// Hold out observed cells and score their predictions.
    Evaluate { input: PathBuf },
    /// Flag eccentric users and rebuild the model without them.
    Filter { input: PathBuf },
}

#[derive(Debug, Args)]
struct Flags {
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, global = true, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, global = true, value_enum, default_value_t = GaugeArg::Symmetric)]
    gauge: GaugeArg,
    #[arg(long, global = true, value_enum, default_value_t = PolicyArg::Refuse)]
    cross_component: PolicyArg,
    #[arg(long, global = true, default_value_t = 0.2)]
    mask_fraction: f64,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 0.5)]
    outlier_threshold: f64,
    #[arg(long, global = true, value_enum, default_value_t = DelimiterArg::Auto)]
    delimiter: DelimiterArg,
    /// Treat the first input line as a header.
    #[arg(long, global = true)]
    header: bool,
    /// Directory for output files (created if absent).
    #[arg(long, global = true, default_value = ".")]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Rz,
    Sinkhorn,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GaugeArg {
    Symmetric,
    FirstRowAnchored,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Refuse,
    EstimateWithWarning,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DelimiterArg {
    Auto,
    Comma,
    Tab,
}

impl Flags {
    fn to_config(&self) -> RunConfig {
        RunConfig {
            tol: self.tol,
            max_iters: self.max_iters,
            gauge: match self.gauge {
                GaugeArg::Symmetric => Gauge::Symmetric,
                GaugeArg::FirstRowAnchored => Gauge::FirstRowAnchored,
            },
            cross_component: match self.cross_component {
                PolicyArg::Refuse => CrossComponentPolicy::Refuse,
                PolicyArg::EstimateWithWarning => CrossComponentPolicy::EstimateWithWarning,
            },
            mask_fraction: self.mask_fraction,
            seed: self.seed,
            outlier_threshold: self.outlier_threshold,
            delimiter: match self.delimiter {
                DelimiterArg::Auto => Delimiter::Auto,
                DelimiterArg::Comma => Delimiter::Comma,
                DelimiterArg::Tab => Delimiter::Tab,
            },
            has_header: self.header,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr, summaries to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cfg = cli.flags.to_config();
    let out = cli.flags.output.as_path();
    let result = match &cli.command {
        Command::Scale { input, kind } => {
            let kind = match kind {
                KindArg::Rz => ScalingKind::Rz,
                KindArg::Sinkhorn => ScalingKind::Sinkhorn,
            };
            cmd_scale(input, &cfg, kind, out)
        }
        Command::Complete { input } => cmd_complete(input, &cfg, out),
        Command::Evaluate { input } => cmd_evaluate(input, &cfg, out),
        Command::Filter { input } => cmd_filter(input, &cfg, out),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
