use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::data::Record;
use crate::error::{Error, Result};
use crate::pipeline::{PeakSet, Signal1D};
use crate::tensor::Vector;

/// Parameters of the synthetic ambulatory ECG trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub mean_hr_bpm: f64,
    /// RR intervals are drawn uniformly within ±this fraction of the mean.
    pub hr_jitter_frac: f64,
    /// Support of a QRS bump (six standard deviations of the Gaussian).
    pub qrs_width_ms: f64,
    pub qrs_amp: (f64, f64),
    pub baseline_wander_amp: f64,
    pub baseline_wander_freq_hz: f64,
    pub noise_std: f64,
    pub glitch_rate_per_min: f64,
    /// Fraction of beats drawn with half amplitude and double width.
    pub arrhythmia_frac: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            sample_rate_hz: 400,
            mean_hr_bpm: 70.0,
            hr_jitter_frac: 0.15,
            qrs_width_ms: 80.0,
            qrs_amp: (0.6, 1.4),
            baseline_wander_amp: 0.3,
            baseline_wander_freq_hz: 0.33,
            noise_std: 0.05,
            glitch_rate_per_min: 2.0,
            arrhythmia_frac: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// No jitter, wander, noise, glitches or arrhythmic beats.
    pub fn clean(duration_s: f64, mean_hr_bpm: f64) -> Self {
        Self {
            duration_s,
            mean_hr_bpm,
            hr_jitter_frac: 0.0,
            baseline_wander_amp: 0.0,
            noise_std: 0.0,
            glitch_rate_per_min: 0.0,
            arrhythmia_frac: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.duration_s,
            self.mean_hr_bpm,
            self.hr_jitter_frac,
            self.qrs_width_ms,
            self.qrs_amp.0,
            self.qrs_amp.1,
            self.baseline_wander_amp,
            self.baseline_wander_freq_hz,
            self.noise_std,
            self.glitch_rate_per_min,
            self.arrhythmia_frac,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("synthetic config values must be finite"));
        }
        if self.duration_s <= 0.0 {
            return Err(Error::invalid("duration must be positive"));
        }
        if self.sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if self.mean_hr_bpm <= 0.0 {
            return Err(Error::invalid("mean heart rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.hr_jitter_frac) {
            return Err(Error::invalid("heart-rate jitter must lie in [0, 1)"));
        }
        if self.qrs_width_ms <= 0.0 {
            return Err(Error::invalid("QRS width must be positive"));
        }
        if self.qrs_amp.0 <= 0.0 || self.qrs_amp.0 > self.qrs_amp.1 {
            return Err(Error::invalid("QRS amplitude range must be positive and ordered"));
        }
        if self.baseline_wander_amp < 0.0 || self.baseline_wander_freq_hz < 0.0 {
            return Err(Error::invalid("baseline wander must be non-negative"));
        }
        if self.noise_std < 0.0 || self.glitch_rate_per_min < 0.0 {
            return Err(Error::invalid("noise and glitch rate must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.arrhythmia_frac) {
            return Err(Error::invalid("arrhythmia fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecord {
    pub record: Record,
    /// The QRS bumps alone, before wander, noise and glitches.
    pub clean_qrs: Vec<f64>,
    /// Peak amplitude of each beat in `clean_qrs`.
    pub beat_amplitudes: Vec<f64>,
}

/// Draws a trace of Gaussian QRS bumps at jittered RR intervals, then adds
/// sinusoidal baseline wander, white noise, and rectangular baseline glitches.
/// Each annotated peak is the integer sample at the centre of its bump.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticRecord> {
    config.validate()?;
    let fs = config.sample_rate_hz as f64;
    let n = (config.duration_s * fs).round() as usize;
    if n == 0 {
        return Err(Error::invalid("duration shorter than one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mean_rr = 60.0 / config.mean_hr_bpm;
    let rr = |rng: &mut ChaCha8Rng| {
        let j = if config.hr_jitter_frac > 0.0 {
            rng.random_range(-config.hr_jitter_frac..=config.hr_jitter_frac)
        } else {
            0.0
        };
        mean_rr * (1.0 + j)
    };

    let mut clean = vec![0.0; n];
    let mut peaks = Vec::new();
    let mut flags = Vec::new();
    let mut amps = Vec::new();
    let base_sigma = config.qrs_width_ms / 1000.0 * fs / 6.0;
    let mut t = rr(&mut rng) / 2.0;
    loop {
        let apex = (t * fs).round() as usize;
        if apex >= n {
            break;
        }
        let mut amp = rng.random_range(config.qrs_amp.0..=config.qrs_amp.1);
        let mut sigma = base_sigma;
        let arrhythmic = config.arrhythmia_frac > 0.0 && rng.random_bool(config.arrhythmia_frac);
        if arrhythmic {
            amp *= 0.5;
            sigma *= 2.0;
        }
        let reach = (4.0 * sigma).ceil() as usize;
        let lo = apex.saturating_sub(reach);
        let hi = (apex + reach).min(n - 1);
        for (m, c) in clean.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let d = m as f64 - apex as f64;
            *c += amp * (-0.5 * d * d / (sigma * sigma)).exp();
        }
        peaks.push(apex);
        flags.push(arrhythmic);
        amps.push(amp);
        t += rr(&mut rng);
    }

    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut samples: Vec<f64> = clean
        .iter()
        .enumerate()
        .map(|(m, &c)| {
            let time = m as f64 / fs;
            c + config.baseline_wander_amp
                * (std::f64::consts::TAU * config.baseline_wander_freq_hz * time + phase).sin()
        })
        .collect();

    if config.noise_std > 0.0 {
        let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
        samples.iter_mut().for_each(|s| *s += noise.sample(&mut rng));
    }

    let expected_glitches = config.glitch_rate_per_min * config.duration_s / 60.0;
    if expected_glitches > 0.0 {
        let count = Poisson::new(expected_glitches)
            .map_err(|e| Error::invalid(e.to_string()))?
            .sample(&mut rng) as usize;
        for _ in 0..count {
            let start = rng.random_range(0..n);
            let len = (rng.random_range(0.04..=0.4) * fs) as usize;
            let level = rng.random_range(0.3..=1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            samples[start..(start + len).min(n)]
                .iter_mut()
                .for_each(|s| *s += level);
        }
    }

    let signal = Signal1D::new(Vector::new(samples)?, config.sample_rate_hz)?;
    Ok(SyntheticRecord {
        record: Record::new(signal, PeakSet::new(peaks)?, flags)?,
        clean_qrs: clean,
        beat_amplitudes: amps,
    })
}
