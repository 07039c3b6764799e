//! The `sonn` command line. Every subcommand takes `--config FILE`, a file of
//! `key = value` lines (`#` starts a comment) whose keys are the long flag
//! names; flags given on the command line win over the file.

mod commands;
mod config;
mod records;

use std::fmt;
use std::io::Write;

use clap::{Parser, Subcommand};

pub use commands::{BenchArgs, CountArgs, DetectArgs, EvalArgs, GenerateArgs, GradcheckArgs, NetArgs, TrainArgs};
pub use records::{load_records, record_paths};

#[derive(Debug)]
pub enum CliError {
    /// A verification the command exists to perform did not pass.
    Check(String),
    Usage(String),
    Io(String),
    /// Malformed input files or any other failure while doing the work.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Failed(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Check(m) => write!(f, "check failed: {m}"),
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Failed(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<sonn_core::Error> for CliError {
    fn from(e: sonn_core::Error) -> Self {
        match e {
            sonn_core::Error::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T = ()> = std::result::Result<T, CliError>;

pub(crate) fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

#[derive(Debug, Parser)]
#[command(name = "sonn", version, about = "Self-ONN R-peak detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic ECG records (signal + peaks) and print a manifest.
    Generate(GenerateArgs),
    /// Train a model on a directory of records.
    Train(TrainArgs),
    /// Detect R peaks in a signal file with a trained checkpoint.
    Detect(DetectArgs),
    /// Score predicted peaks against ground truth.
    Eval(EvalArgs),
    /// Report parameter and multiply-accumulate counts.
    Count(CountArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Time the three forward-pass formulations of one layer.
    Bench(BenchArgs),
}

/// Parses `args` (program name first) and runs the subcommand, writing its
/// report to `out`. Help and version requests are written to `out` as well.
pub fn run<I, S>(args: I, out: &mut dyn Write) -> CliResult
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args = config::expand(args.into_iter().map(Into::into).collect())?;
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    write!(out, "{e}")?;
                    Ok(())
                }
                _ => Err(CliError::Usage(e.to_string().trim_end().to_string())),
            };
        }
    };
    match cli.command {
        Command::Generate(a) => commands::generate(&a, out),
        Command::Train(a) => commands::train(&a, out),
        Command::Detect(a) => commands::detect(&a, out),
        Command::Eval(a) => commands::eval(&a, out),
        Command::Count(a) => commands::count(&a, out),
        Command::Gradcheck(a) => commands::gradcheck(&a, out),
        Command::Bench(a) => commands::bench(&a, out),
    }
}
