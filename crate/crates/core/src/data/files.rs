use std::fs;
use std::path::Path;

use crate::data::Record;
use crate::error::{Error, Result};
use crate::pipeline::{PeakSet, Signal1D};
use crate::tensor::Vector;

pub const SIGNAL_MAGIC: &[u8; 8] = b"SONN1SIG";
pub const SIGNAL_VERSION: u16 = 1;
/// magic, version u16, sample rate u32, sample count u64
pub const SIGNAL_HEADER_LEN: usize = 8 + 2 + 4 + 8;

const PEAKS_HEADER: &str = "index,arrhythmia";

/// Little-endian signal file: header followed by samples as `f32`.
pub fn encode_signal(signal: &Signal1D) -> Vec<u8> {
    let mut out = Vec::with_capacity(SIGNAL_HEADER_LEN + 4 * signal.len());
    out.extend_from_slice(SIGNAL_MAGIC);
    out.extend_from_slice(&SIGNAL_VERSION.to_le_bytes());
    out.extend_from_slice(&signal.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(signal.len() as u64).to_le_bytes());
    for &s in signal.samples.iter() {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    out
}

pub fn decode_signal(bytes: &[u8]) -> Result<Signal1D> {
    if bytes.len() < SIGNAL_HEADER_LEN {
        return Err(Error::format(
            bytes.len() as u64,
            format!(
                "truncated header: expected {SIGNAL_HEADER_LEN} bytes, found {}",
                bytes.len()
            ),
        ));
    }
    if &bytes[..8] != SIGNAL_MAGIC {
        return Err(Error::format(0, "bad magic, not a signal file"));
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != SIGNAL_VERSION {
        return Err(Error::format(8, format!("unsupported signal version {version}")));
    }
    let rate = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes"));
    if rate == 0 {
        return Err(Error::format(10, "sample rate is zero"));
    }
    let count = u64::from_le_bytes(bytes[14..22].try_into().expect("8 bytes"));
    if count == 0 {
        return Err(Error::format(14, "signal has no samples"));
    }
    let expected = count
        .checked_mul(4)
        .and_then(|b| b.checked_add(SIGNAL_HEADER_LEN as u64))
        .ok_or_else(|| Error::format(14, format!("sample count {count} overflows")))?;
    if bytes.len() as u64 != expected {
        return Err(Error::format(
            SIGNAL_HEADER_LEN as u64,
            format!("sample count {count} needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let mut samples = Vec::with_capacity(count as usize);
    for (j, chunk) in bytes[SIGNAL_HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(Error::format((SIGNAL_HEADER_LEN + 4 * j) as u64, "non-finite sample"));
        }
        samples.push(v as f64);
    }
    Signal1D::new(Vector::new(samples)?, rate)
}

pub fn write_signal(path: impl AsRef<Path>, signal: &Signal1D) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_signal(signal)).map_err(|e| Error::io(path, e))
}

pub fn read_signal(path: impl AsRef<Path>) -> Result<Signal1D> {
    let path = path.as_ref();
    decode_signal(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// CSV with header `index,arrhythmia`, one peak per line.
pub fn write_peaks(path: impl AsRef<Path>, peaks: &PeakSet, arrhythmia: &[bool]) -> Result<()> {
    let path = path.as_ref();
    if arrhythmia.len() != peaks.len() {
        return Err(Error::invalid(format!(
            "{} flags for {} peaks",
            arrhythmia.len(),
            peaks.len()
        )));
    }
    let mut out = String::with_capacity(16 * (peaks.len() + 1));
    out.push_str(PEAKS_HEADER);
    out.push('\n');
    for (&p, &flag) in peaks.indices().iter().zip(arrhythmia) {
        out.push_str(&format!("{p},{}\n", u8::from(flag)));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_peaks(text: &str) -> Result<(PeakSet, Vec<bool>)> {
    let mut reader = csv_reader(text);
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| parse_error(1, format!("missing header `{PEAKS_HEADER}`")))?
        .map_err(|e| parse_error(1, e.to_string()))?;
    if header.iter().map(str::trim).collect::<Vec<_>>() != ["index", "arrhythmia"] {
        return Err(parse_error(1, format!("expected header `{PEAKS_HEADER}`")));
    }
    let mut indices: Vec<usize> = Vec::new();
    let mut flags = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| parse_error(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(parse_error(line, format!("expected 2 fields, found {}", rec.len())));
        }
        let idx: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| parse_error(line, format!("`{}` is not a sample index", &rec[0])))?;
        let flag = match rec[1].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse_error(
                    line,
                    format!("arrhythmia flag must be 0 or 1, got `{other}`"),
                ))
            }
        };
        if let Some(&prev) = indices.last() {
            if idx <= prev {
                return Err(parse_error(
                    line,
                    format!("index {idx} does not increase (previous {prev})"),
                ));
            }
        }
        indices.push(idx);
        flags.push(flag);
    }
    Ok((PeakSet::new(indices)?, flags))
}

pub fn read_peaks(path: impl AsRef<Path>) -> Result<(PeakSet, Vec<bool>)> {
    let path = path.as_ref();
    parse_peaks(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

fn parse_signal_csv(text: &str) -> Result<Vec<f64>> {
    let mut samples = Vec::new();
    for rec in csv_reader(text).records() {
        let rec = rec.map_err(|e| parse_error(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 1 {
            return Err(parse_error(line, format!("expected one value, found {}", rec.len())));
        }
        let v: f64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| parse_error(line, format!("`{}` is not a number", &rec[0])))?;
        if !v.is_finite() {
            return Err(parse_error(line, "sample is not finite"));
        }
        samples.push(v);
    }
    Ok(samples)
}

/// Builds a record from a one-value-per-line signal CSV and a peaks CSV.
pub fn import_csv_record(
    signal_csv: impl AsRef<Path>,
    peaks_csv: impl AsRef<Path>,
    sample_rate_hz: u32,
) -> Result<Record> {
    let path = signal_csv.as_ref();
    let samples = parse_signal_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
    if samples.is_empty() {
        return Err(Error::Validation(format!("{} holds no samples", path.display())));
    }
    let signal = Signal1D::new(Vector::new(samples)?, sample_rate_hz)?;
    let (peaks, flags) = read_peaks(peaks_csv)?;
    Record::new(signal, peaks, flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signal(v: &[f64]) -> Signal1D {
        Signal1D::new(Vector::new(v.to_vec()).unwrap(), 400).unwrap()
    }

    #[test]
    fn three_sample_file_layout() {
        let bytes = encode_signal(&signal(&[0.5, -1.25, 3.0]));
        assert_eq!(bytes.len(), 8 + 2 + 4 + 8 + 12);
        assert_eq!(&bytes[..8], b"SONN1SIG");
        assert_eq!(&bytes[8..10], &[1, 0]);
        assert_eq!(&bytes[10..14], &400u32.to_le_bytes());
        assert_eq!(&bytes[14..22], &3u64.to_le_bytes());
        assert_eq!(&bytes[22..26], &0.5f32.to_le_bytes());
    }

    #[test]
    fn signal_round_trip_at_f32() {
        let s = signal(&[0.1, -0.333333, 12345.678, 1e-9]);
        let back = decode_signal(&encode_signal(&s)).unwrap();
        assert_eq!(back.sample_rate_hz, 400);
        for (a, b) in s.samples.iter().zip(back.samples.iter()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn truncated_signal_names_lengths() {
        let bytes = encode_signal(&signal(&[1.0, 2.0, 3.0]));
        let err = decode_signal(&bytes[..bytes.len() - 1]).unwrap_err().to_string();
        assert!(err.contains("34") && err.contains("33"), "{err}");
        assert!(decode_signal(&bytes[..10]).is_err());
    }

    #[test]
    fn every_header_byte_corruption_is_rejected() {
        let bytes = encode_signal(&signal(&[1.0, 2.0, 3.0]));
        // magic, version and the sample count (the shape field)
        let guarded = (0..10).chain(14..22);
        for pos in guarded {
            for flip in [0x01u8, 0x80, 0xFF] {
                let mut bad = bytes.clone();
                bad[pos] ^= flip;
                assert!(decode_signal(&bad).is_err(), "byte {pos} ^ {flip:#x}");
            }
        }
    }

    #[test]
    fn peaks_csv_examples() {
        let text = "index,arrhythmia\n100,0\n500,1\n";
        let (p, f) = parse_peaks(text).unwrap();
        assert_eq!(p.indices(), &[100, 500]);
        assert_eq!(f, vec![false, true]);

        let (p, f) = parse_peaks("index,arrhythmia\n").unwrap();
        assert!(p.is_empty() && f.is_empty());
    }

    #[test]
    fn peaks_csv_errors_carry_line_numbers() {
        let cases = [
            ("index,arrhythmia\n100,0\n90,0\n", 3),
            ("index,arrhythmia\n100,0\nabc,0\n", 3),
            ("index,arrhythmia\n7,2\n", 2),
            ("idx,flag\n1,0\n", 1),
            ("index,arrhythmia\n1\n", 2),
        ];
        for (text, line) in cases {
            match parse_peaks(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }
}
