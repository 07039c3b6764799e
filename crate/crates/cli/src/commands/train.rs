use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use sonn_core::data::{save_checkpoint, Record};
use sonn_core::network::{self, OptimizerState, TrainConfig};
use sonn_core::pipeline::{self, compute_metrics, ms_to_samples, ExtractOptions, PULSE_WIDTH};
use sonn_core::Model;

use super::{check_seg_len, row, tsv, NetArgs};
use crate::records::load_records;
use crate::{usage, CliError, CliResult};

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    /// Directory of `.sig` / `.csv` record pairs.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Restart `r` initializes and shuffles with `seed + r`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent runs; the one with the best final validation F1 is kept.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    /// Fraction of records (the last ones, by name) held out for validation.
    #[arg(long, default_value_t = 0.2)]
    pub val_frac: f64,
    /// Window length for training and validation.
    #[arg(long, default_value_t = 1000)]
    pub seg_len: usize,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Write the loss trace here instead of standard output.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, default_value_t = 75.0)]
    pub tol_ms: f64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 120.0)]
    pub refractory_ms: f64,
}

/// Number of held-out records; at least one record always stays in training.
pub fn validation_count(records: usize, val_frac: f64) -> usize {
    if val_frac <= 0.0 || records < 2 {
        return 0;
    }
    ((records as f64 * val_frac - 1e-9).ceil() as usize).min(records - 1)
}

struct Run {
    model: Model,
    optimizer: OptimizerState,
    f1: f64,
}

pub fn train(args: &TrainArgs, out: &mut dyn Write) -> CliResult {
    let config = args.net.config()?;
    check_seg_len(&config, args.seg_len)?;
    if !(args.lr > 0.0 && args.lr.is_finite()) {
        return Err(usage(format!("--lr must be positive, got {}", args.lr)));
    }
    if args.batch_size == 0 || args.restarts == 0 {
        return Err(usage("--batch-size and --restarts must be at least 1"));
    }
    if !(0.0..1.0).contains(&args.val_frac) {
        return Err(usage(format!("--val-frac must be in [0, 1), got {}", args.val_frac)));
    }
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        return Err(usage(format!("--threshold must be in (0, 1), got {}", args.threshold)));
    }
    if !(args.tol_ms >= 0.0 && args.refractory_ms >= 0.0) {
        return Err(usage("--tol-ms and --refractory-ms must be non-negative"));
    }

    let records = load_records(&args.data)?;
    if records.is_empty() {
        return Err(CliError::Failed(format!("{} holds no records", args.data.display())));
    }
    let rate = records[0].signal.sample_rate_hz;
    let n_val = validation_count(records.len(), args.val_frac);
    let (train_set, val_set) = records.split_at(records.len() - n_val);
    // Without held-out records the training records are scored instead.
    let scored: &[Record] = if val_set.is_empty() { train_set } else { val_set };
    let mut examples = Vec::new();
    for record in train_set {
        examples.extend(pipeline::record_examples(record, args.seg_len, PULSE_WIDTH)?);
    }
    let opts = ExtractOptions {
        threshold: args.threshold,
        refractory_ms: args.refractory_ms,
        sample_rate_hz: rate,
    };
    let tol = ms_to_samples(args.tol_ms, rate);

    let mut trace_file;
    let sink: &mut dyn Write = match &args.trace {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            trace_file = BufWriter::new(file);
            &mut trace_file
        }
        None => out,
    };
    tsv(sink, &row!["restart", "epoch", "train_loss", "val_loss", "val_f1"])?;

    let mut best: Option<Run> = None;
    for restart in 0..args.restarts {
        let seed = args.seed.wrapping_add(restart as u64);
        let mut model = Model::init(config.clone(), seed)?;
        let mut optimizer = OptimizerState::adam(args.lr, &model);
        let mut f1 = None;
        let mut write_err = None;
        let train_config = TrainConfig {
            epochs: args.epochs,
            batch_size: args.batch_size,
            seed,
        };
        network::train(
            &mut model,
            &mut optimizer,
            &examples,
            &train_config,
            |epoch, loss, m| {
                let eval = pipeline::evaluate(m, scored, args.seg_len, &opts, tol)?;
                let score = compute_metrics(&eval.counts).f1;
                f1 = Some(score);
                let line = row![
                    restart,
                    epoch + 1,
                    format!("{loss:.6}"),
                    format!("{:.6}", eval.loss),
                    format!("{score:.6}")
                ];
                if let Err(e) = tsv(sink, &line) {
                    write_err.get_or_insert(e);
                }
                Ok(())
            },
        )?;
        if let Some(e) = write_err {
            return Err(e);
        }
        let f1 = match f1 {
            Some(f1) => f1,
            None => compute_metrics(&pipeline::evaluate(&model, scored, args.seg_len, &opts, tol)?.counts).f1,
        };
        if best.as_ref().is_none_or(|b| f1 > b.f1) {
            best = Some(Run { model, optimizer, f1 });
        }
    }
    sink.flush()?;

    let best = best.expect("at least one restart");
    save_checkpoint(&args.checkpoint, &best.model, rate, Some(&best.optimizer))
        .map_err(|e| CliError::Io(format!("{}: {e}", args.checkpoint.display())))?;
    Ok(())
}
