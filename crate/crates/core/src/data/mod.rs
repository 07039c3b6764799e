//! Synthetic ECG with ground-truth R peaks, and the on-disk formats for
//! signals, peak annotations and model checkpoints.

mod checkpoint;
mod files;
mod synthetic;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use files::{
    decode_signal, encode_signal, import_csv_record, read_peaks, read_signal, write_peaks, write_signal,
    SIGNAL_HEADER_LEN, SIGNAL_MAGIC, SIGNAL_VERSION,
};
pub use synthetic::{generate, SyntheticConfig, SyntheticRecord};

use crate::error::{Error, Result};
use crate::pipeline::{PeakSet, Signal1D};

/// A signal with its annotated R peaks and one arrhythmia flag per peak.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub signal: Signal1D,
    pub peaks: PeakSet,
    pub arrhythmia: Vec<bool>,
}

impl Record {
    pub fn new(signal: Signal1D, peaks: PeakSet, arrhythmia: Vec<bool>) -> Result<Self> {
        peaks.check_within(signal.len())?;
        if arrhythmia.len() != peaks.len() {
            return Err(Error::Validation(format!(
                "{} arrhythmia flags for {} peaks",
                arrhythmia.len(),
                peaks.len()
            )));
        }
        Ok(Self {
            signal,
            peaks,
            arrhythmia,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<Record>,
}
