use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use sonn_core::data::read_peaks;
use sonn_core::pipeline::{compute_metrics, match_peaks, ms_to_samples, MatchCounts};

use super::{row, tsv};
use crate::{usage, CliResult};

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    /// Detected peaks CSV.
    #[arg(long, required_unless_present = "counts")]
    pub pred: Option<PathBuf>,
    /// Reference peaks CSV.
    #[arg(long, required_unless_present = "counts")]
    pub truth: Option<PathBuf>,
    /// Score given counts `TP,FP,FN` instead of peak files.
    #[arg(long, conflicts_with_all = ["pred", "truth"])]
    pub counts: Option<String>,
    #[arg(long, default_value_t = 75.0)]
    pub tol_ms: f64,
    /// Sample rate of the peak indices, used to convert `--tol-ms`.
    #[arg(long, default_value_t = 400)]
    pub sample_rate: u32,
    /// Print a header-first TSV row instead of the text report.
    #[arg(long)]
    pub tsv: bool,
}

fn parse_counts(text: &str) -> CliResult<MatchCounts> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let parsed: Result<Vec<u64>, _> = parts.iter().map(|p| p.parse::<u64>()).collect();
    match parsed.as_deref() {
        Ok(&[tp, fp, fn_]) => Ok(MatchCounts {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
        }),
        _ => Err(usage(format!("--counts expects TP,FP,FN as integers, got `{text}`"))),
    }
}

pub fn eval(args: &EvalArgs, out: &mut dyn Write) -> CliResult {
    let counts = match (&args.counts, &args.pred, &args.truth) {
        (Some(text), _, _) => parse_counts(text)?,
        (None, Some(pred), Some(truth)) => {
            if args.tol_ms.is_nan() || args.tol_ms < 0.0 || args.sample_rate == 0 {
                return Err(usage("--tol-ms must be non-negative and --sample-rate positive"));
            }
            let (pred, _) = read_peaks(pred)?;
            let (truth, _) = read_peaks(truth)?;
            let tol = ms_to_samples(args.tol_ms, args.sample_rate);
            match_peaks(pred.indices(), truth.indices(), tol)?
        }
        _ => return Err(usage("give --pred and --truth, or --counts")),
    };
    let m = compute_metrics(&counts);
    let (tp, fp, fn_) = (counts.true_positives, counts.false_positives, counts.false_negatives);
    if args.tsv {
        tsv(out, &row!["tp", "fp", "fn", "sen", "ppr", "f1"])?;
        tsv(
            out,
            &row![
                tp,
                fp,
                fn_,
                format!("{:.6}", m.sen),
                format!("{:.6}", m.ppr),
                format!("{:.6}", m.f1)
            ],
        )
    } else {
        writeln!(out, "TP  {tp}\nFP  {fp}\nFN  {fn_}")?;
        writeln!(
            out,
            "Sen {:.2}%\nPpr {:.2}%\nF1  {:.2}%",
            100.0 * m.sen,
            100.0 * m.ppr,
            100.0 * m.f1
        )?;
        Ok(())
    }
}
