use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use sonn_core::data::{self, SyntheticConfig};

use super::{row, tsv};
use crate::records::record_stem;
use crate::{usage, CliError, CliResult};

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct GenerateArgs {
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of records. Record `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 60.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 400)]
    pub sample_rate: u32,
    #[arg(long, default_value_t = 70.0)]
    pub hr_bpm: f64,
    #[arg(long, default_value_t = 0.15)]
    pub hr_jitter: f64,
    #[arg(long, default_value_t = 80.0)]
    pub qrs_width_ms: f64,
    #[arg(long, default_value_t = 0.6)]
    pub qrs_amp_min: f64,
    #[arg(long, default_value_t = 1.4)]
    pub qrs_amp_max: f64,
    #[arg(long, default_value_t = 0.3)]
    pub wander_amp: f64,
    #[arg(long, default_value_t = 0.33)]
    pub wander_freq_hz: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_std: f64,
    /// Baseline glitches per minute.
    #[arg(long, default_value_t = 2.0)]
    pub glitch_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    pub arrhythmia_frac: f64,
}

impl GenerateArgs {
    fn synthetic(&self, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            duration_s: self.duration_s,
            sample_rate_hz: self.sample_rate,
            mean_hr_bpm: self.hr_bpm,
            hr_jitter_frac: self.hr_jitter,
            qrs_width_ms: self.qrs_width_ms,
            qrs_amp: (self.qrs_amp_min, self.qrs_amp_max),
            baseline_wander_amp: self.wander_amp,
            baseline_wander_freq_hz: self.wander_freq_hz,
            noise_std: self.noise_std,
            glitch_rate_per_min: self.glitch_rate,
            arrhythmia_frac: self.arrhythmia_frac,
            seed,
        }
    }
}

pub fn generate(args: &GenerateArgs, out: &mut dyn Write) -> CliResult {
    if args.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    args.synthetic(args.seed).validate().map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;

    tsv(out, &row!["record", "duration_s", "peaks", "arrhythmic"])?;
    for id in 0..args.count {
        let generated = data::generate(&args.synthetic(args.seed.wrapping_add(id as u64)))?;
        let record = &generated.record;
        let stem = args.out.join(record_stem(id));
        data::write_signal(stem.with_extension("sig"), &record.signal)?;
        data::write_peaks(stem.with_extension("csv"), &record.peaks, &record.arrhythmia)?;
        let arrhythmic = record.arrhythmia.iter().filter(|&&a| a).count();
        tsv(
            out,
            &row![
                record_stem(id),
                record.signal.duration_s(),
                record.peaks.len(),
                arrhythmic
            ],
        )?;
    }
    Ok(())
}
