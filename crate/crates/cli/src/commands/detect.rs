use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use sonn_core::data::{load_checkpoint, read_signal, write_peaks};
use sonn_core::pipeline::{self, ExtractOptions};

use super::{check_seg_len, row, tsv};
use crate::{usage, CliError, CliResult};

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct DetectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub signal: PathBuf,
    /// Peaks CSV to write; arrhythmia flags are written as 0.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 120.0)]
    pub refractory_ms: f64,
    /// Window length the signal is cut into.
    #[arg(long, default_value_t = 8000)]
    pub seg_len: usize,
}

pub fn detect(args: &DetectArgs, out: &mut dyn Write) -> CliResult {
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        return Err(usage(format!("--threshold must be in (0, 1), got {}", args.threshold)));
    }
    if args.refractory_ms.is_nan() || args.refractory_ms < 0.0 {
        return Err(usage("--refractory-ms must be non-negative"));
    }
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    check_seg_len(checkpoint.model.config(), args.seg_len)?;
    let signal = read_signal(&args.signal)?;
    if signal.sample_rate_hz != checkpoint.sample_rate_hz {
        return Err(CliError::Failed(format!(
            "checkpoint was trained at {} Hz but {} is sampled at {} Hz",
            checkpoint.sample_rate_hz,
            args.signal.display(),
            signal.sample_rate_hz
        )));
    }
    let opts = ExtractOptions {
        threshold: args.threshold,
        refractory_ms: args.refractory_ms,
        sample_rate_hz: signal.sample_rate_hz,
    };
    let peaks = pipeline::detect(&checkpoint.model, &signal, args.seg_len, &opts)?;
    write_peaks(&args.out, &peaks, &vec![false; peaks.len()])?;
    tsv(out, &row!["signal", "samples", "peaks"])?;
    tsv(out, &row![args.signal.display(), signal.len(), peaks.len()])
}
