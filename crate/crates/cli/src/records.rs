use std::fs;
use std::path::{Path, PathBuf};

use sonn_core::data::{read_peaks, read_signal, Record};

use crate::{CliError, CliResult};

/// File stem of record `id` inside a data directory.
pub fn record_stem(id: usize) -> String {
    format!("rec_{id:03}")
}

/// `(signal, peaks)` paths of every record in `dir`, sorted by name. A record
/// is a `.sig` file with a `.csv` file of the same stem next to it.
pub fn record_paths(dir: &Path) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut signals = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?
            .path();
        if path.extension().is_some_and(|x| x == "sig") {
            signals.push(path);
        }
    }
    signals.sort();
    signals
        .into_iter()
        .map(|sig| {
            let csv = sig.with_extension("csv");
            if csv.is_file() {
                Ok((sig, csv))
            } else {
                Err(CliError::Failed(format!(
                    "{} has no peaks file {}",
                    sig.display(),
                    csv.display()
                )))
            }
        })
        .collect()
}

/// Every record in `dir`; all must share one sample rate.
pub fn load_records(dir: &Path) -> CliResult<Vec<Record>> {
    let mut records = Vec::new();
    for (sig, csv) in record_paths(dir)? {
        let signal = read_signal(&sig)?;
        let (peaks, flags) = read_peaks(&csv)?;
        let record =
            Record::new(signal, peaks, flags).map_err(|e| CliError::Failed(format!("{}: {e}", sig.display())))?;
        if let Some(first) = records.first() {
            let first: &Record = first;
            if first.signal.sample_rate_hz != record.signal.sample_rate_hz {
                return Err(CliError::Failed(format!(
                    "{} is sampled at {} Hz, earlier records at {} Hz",
                    sig.display(),
                    record.signal.sample_rate_hz,
                    first.signal.sample_rate_hz
                )));
            }
        }
        records.push(record);
    }
    Ok(records)
}
