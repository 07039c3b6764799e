//! Turns R-peak detection into per-sample regression and back: fixed-length
//! segmentation, min-max normalization, pulse-train targets, peak
//! extraction from predictions, tolerance matching, and Sen/Ppr/F1.

use crate::data::Record;
use crate::error::{Error, Result};
use crate::network::{bce_loss, Example, Layer, Model};
use crate::tensor::Vector;

/// A sampled single-lead trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal1D {
    pub samples: Vector,
    pub sample_rate_hz: u32,
}

impl Signal1D {
    pub fn new(samples: Vector, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Strictly increasing sample positions of R peaks.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PeakSet {
    indices: Vec<usize>,
}

impl PeakSet {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        check_sorted(&indices)?;
        Ok(Self { indices })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Fails if any peak lies at or beyond `len`.
    pub fn check_within(&self, len: usize) -> Result<()> {
        match self.indices.last() {
            Some(&last) if last >= len => Err(Error::Validation(format!(
                "peak at sample {last} is outside a signal of {len} samples"
            ))),
            _ => Ok(()),
        }
    }
}

fn check_sorted(indices: &[usize]) -> Result<()> {
    match indices.windows(2).position(|w| w[0] >= w[1]) {
        Some(i) => Err(Error::invalid(format!(
            "peak indices must be strictly increasing ({} then {} at position {})",
            indices[i],
            indices[i + 1],
            i + 1
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

impl std::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.true_positives += rhs.true_positives;
        self.false_positives += rhs.false_positives;
        self.false_negatives += rhs.false_negatives;
    }
}

/// Sensitivity, positive predictivity and their harmonic mean, as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub sen: f64,
    pub ppr: f64,
    pub f1: f64,
}

/// One fixed-length window of a longer signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub data: Vector,
    /// Absolute position of `data[0]` in the source signal.
    pub offset: usize,
    /// Samples that come from the signal; the rest is zero padding.
    pub valid_len: usize,
}

impl Segment {
    pub fn is_partial(&self) -> bool {
        self.valid_len < self.data.len()
    }
}

/// `(offset, valid_len)` of every window. Windows advance by
/// `seg_len − overlap` until one reaches the end of the signal.
pub fn segment_bounds(len: usize, seg_len: usize, overlap: usize) -> Result<Vec<(usize, usize)>> {
    if len == 0 {
        return Err(Error::invalid("cannot segment an empty signal"));
    }
    if seg_len == 0 {
        return Err(Error::invalid("segment length must be at least 1"));
    }
    if overlap >= seg_len {
        return Err(Error::invalid("overlap must be shorter than the segment"));
    }
    let step = seg_len - overlap;
    let mut bounds = Vec::with_capacity(len / step + 1);
    let mut offset = 0;
    loop {
        let valid = seg_len.min(len - offset);
        bounds.push((offset, valid));
        if offset + seg_len >= len {
            break;
        }
        offset += step;
    }
    Ok(bounds)
}

/// Cuts `samples` into `seg_len` windows; a short trailing window is zero
/// padded and records its valid length.
pub fn segment(samples: &[f64], seg_len: usize, overlap: usize) -> Result<Vec<Segment>> {
    segment_bounds(samples.len(), seg_len, overlap)?
        .into_iter()
        .map(|(offset, valid_len)| {
            let mut data = samples[offset..offset + valid_len].to_vec();
            data.resize(seg_len, 0.0);
            Ok(Segment {
                data: Vector::new(data)?,
                offset,
                valid_len,
            })
        })
        .collect()
}

/// Linear map of the segment onto `[-1, 1]`. A constant segment maps to zeros.
pub fn normalize(segment: &[f64]) -> Result<Vector> {
    let (min, max) = segment.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let range = max - min;
    if range == 0.0 {
        return Vector::zeros(segment.len());
    }
    Vector::new(
        segment
            .iter()
            .map(|&v| (2.0 * (v - min) / range - 1.0).clamp(-1.0, 1.0))
            .collect(),
    )
}

/// Pulse-train regression target: ones on a `pulse_width` window centred on
/// every peak (clipped at the segment edges), zeros elsewhere.
pub fn make_target(peaks: &PeakSet, seg_len: usize, pulse_width: usize) -> Result<Vector> {
    if pulse_width.is_multiple_of(2) {
        return Err(Error::invalid(format!("pulse width must be odd, got {pulse_width}")));
    }
    peaks.check_within(seg_len)?;
    let half = pulse_width / 2;
    let mut target = vec![0.0; seg_len];
    for &p in peaks.indices() {
        let lo = p.saturating_sub(half);
        let hi = (p + half).min(seg_len - 1);
        target[lo..=hi].iter_mut().for_each(|t| *t = 1.0);
    }
    Vector::new(target)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub threshold: f64,
    pub refractory_ms: f64,
    pub sample_rate_hz: u32,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            refractory_ms: 120.0,
            sample_rate_hz: 400,
        }
    }
}

impl ExtractOptions {
    pub fn refractory_samples(&self) -> usize {
        ms_to_samples(self.refractory_ms, self.sample_rate_hz)
    }
}

pub fn ms_to_samples(ms: f64, sample_rate_hz: u32) -> usize {
    (ms * sample_rate_hz as f64 / 1000.0).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakCandidate {
    pub index: usize,
    pub value: f64,
}

/// One candidate per maximal run of samples at or above `threshold`: the
/// run's maximum, placed at the centre of the first plateau that attains it.
pub fn peak_candidates(prediction: &[f64], threshold: f64) -> Vec<PeakCandidate> {
    let mut out = Vec::new();
    let mut m = 0;
    while m < prediction.len() {
        if prediction[m] < threshold {
            m += 1;
            continue;
        }
        let start = m;
        while m < prediction.len() && prediction[m] >= threshold {
            m += 1;
        }
        let run = &prediction[start..m];
        let best = run.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = run.iter().position(|&v| v == best).unwrap_or(0);
        let plateau = run[first..].iter().take_while(|&&v| v == best).count();
        out.push(PeakCandidate {
            index: start + first + (plateau - 1) / 2,
            value: best,
        });
    }
    out
}

/// Merges candidates closer than `min_gap` samples, keeping the higher one
/// (the earlier one on ties). Input must be sorted by index.
pub fn refractory_merge(candidates: &[PeakCandidate], min_gap: usize) -> Vec<PeakCandidate> {
    let mut kept: Vec<PeakCandidate> = Vec::with_capacity(candidates.len());
    for &c in candidates {
        match kept.last_mut() {
            Some(last) if c.index - last.index < min_gap => {
                if c.value > last.value {
                    *last = c;
                }
            }
            _ => kept.push(c),
        }
    }
    kept
}

pub fn extract_peaks(prediction: &[f64], opts: &ExtractOptions) -> PeakSet {
    let merged = refractory_merge(&peak_candidates(prediction, opts.threshold), opts.refractory_samples());
    PeakSet {
        indices: merged.into_iter().map(|c| c.index).collect(),
    }
}

/// Greedy one-to-one matching: truth peaks in increasing order each take the
/// nearest still-unmatched prediction within `tol` samples (earlier on ties).
pub fn match_peaks(predicted: &[usize], truth: &[usize], tol: usize) -> Result<MatchCounts> {
    check_sorted(predicted)?;
    check_sorted(truth)?;
    let mut used = vec![false; predicted.len()];
    let mut tp = 0u64;
    for &t in truth {
        let lo = predicted.partition_point(|&p| p + tol < t);
        let mut best: Option<(usize, usize)> = None;
        for (j, &p) in predicted.iter().enumerate().skip(lo) {
            if p > t + tol {
                break;
            }
            let dist = p.abs_diff(t);
            if !used[j] && best.is_none_or(|(_, d)| dist < d) {
                best = Some((j, dist));
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
            tp += 1;
        }
    }
    Ok(MatchCounts {
        true_positives: tp,
        false_positives: predicted.len() as u64 - tp,
        false_negatives: truth.len() as u64 - tp,
    })
}

/// `ppr = tp/(tp+fp)`, `sen = tp/(tp+fn)`, `f1` their harmonic mean. Each
/// undefined ratio is reported as 0.
pub fn compute_metrics(counts: &MatchCounts) -> Metrics {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let tp = counts.true_positives;
    let sen = ratio(tp, tp + counts.false_negatives);
    let ppr = ratio(tp, tp + counts.false_positives);
    let f1 = if sen + ppr > 0.0 {
        2.0 * ppr * sen / (ppr + sen)
    } else {
        0.0
    };
    Metrics { sen, ppr, f1 }
}

/// Width of the pulse drawn around every peak in a training target.
pub const PULSE_WIDTH: usize = 5;

/// Normalizes the valid part of a window and zero pads it back to full length.
fn prepare(samples: &[f64], offset: usize, valid_len: usize, seg_len: usize) -> Result<Vector> {
    let mut data = normalize(&samples[offset..offset + valid_len])?.into_inner();
    data.resize(seg_len, 0.0);
    Vector::new(data)
}

/// Training pairs from one record, one per `seg_len` window. A short last
/// window is normalized over its valid samples only and zero padded.
pub fn record_examples(record: &Record, seg_len: usize, pulse_width: usize) -> Result<Vec<Example>> {
    let samples = record.signal.samples.as_slice();
    let peaks = record.peaks.indices();
    segment_bounds(samples.len(), seg_len, 0)?
        .into_iter()
        .map(|(offset, valid)| {
            let lo = peaks.partition_point(|&p| p < offset);
            let hi = peaks.partition_point(|&p| p < offset + valid);
            let local = PeakSet::new(peaks[lo..hi].iter().map(|&p| p - offset).collect())?;
            Ok(Example {
                input: prepare(samples, offset, valid, seg_len)?,
                target: make_target(&local, seg_len, pulse_width)?,
            })
        })
        .collect()
}

/// Runs the model over consecutive `seg_len` windows of the signal and
/// returns the detected peaks in signal coordinates. Candidates from all
/// windows are pooled before the refractory merge, so a QRS split by a window
/// boundary is reported once.
pub fn detect<L: Layer>(model: &Model<L>, signal: &Signal1D, seg_len: usize, opts: &ExtractOptions) -> Result<PeakSet> {
    scan(model, signal, seg_len, opts, |_, _, _| Ok(()))
}

/// Shared body of [`detect`] and [`evaluate`]; `visit` sees each window's
/// offset, valid length and prediction.
fn scan<L: Layer>(
    model: &Model<L>,
    signal: &Signal1D,
    seg_len: usize,
    opts: &ExtractOptions,
    mut visit: impl FnMut(usize, usize, &Vector) -> Result<()>,
) -> Result<PeakSet> {
    if opts.sample_rate_hz != signal.sample_rate_hz {
        return Err(Error::invalid(format!(
            "extraction expects {} Hz, signal is sampled at {} Hz",
            opts.sample_rate_hz, signal.sample_rate_hz
        )));
    }
    let samples = signal.samples.as_slice();
    let mut candidates = Vec::new();
    for (offset, valid) in segment_bounds(samples.len(), seg_len, 0)? {
        let prediction = model.predict(&prepare(samples, offset, valid, seg_len)?)?;
        visit(offset, valid, &prediction)?;
        candidates.extend(
            peak_candidates(&prediction[..valid], opts.threshold)
                .into_iter()
                .map(|c| PeakCandidate {
                    index: c.index + offset,
                    ..c
                }),
        );
    }
    PeakSet::new(
        refractory_merge(&candidates, opts.refractory_samples())
            .into_iter()
            .map(|c| c.index)
            .collect(),
    )
}

/// Detection counts and mean per-window BCE against the pulse targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub counts: MatchCounts,
    pub loss: f64,
}

/// Scores the model on whole records: detection counts summed over records
/// and the loss averaged over windows, from one forward pass per window.
pub fn evaluate<L: Layer>(
    model: &Model<L>,
    records: &[Record],
    seg_len: usize,
    opts: &ExtractOptions,
    tol_samples: usize,
) -> Result<Evaluation> {
    let mut counts = MatchCounts::default();
    let mut loss = 0.0;
    let mut windows = 0;
    for record in records {
        let peaks = record.peaks.indices();
        let found = scan(model, &record.signal, seg_len, opts, |offset, valid, prediction| {
            let lo = peaks.partition_point(|&p| p < offset);
            let hi = peaks.partition_point(|&p| p < offset + valid);
            let local = PeakSet::new(peaks[lo..hi].iter().map(|&p| p - offset).collect())?;
            loss += bce_loss(prediction, &make_target(&local, seg_len, PULSE_WIDTH)?)?.0;
            windows += 1;
            Ok(())
        })?;
        counts += match_peaks(found.indices(), peaks, tol_samples)?;
    }
    Ok(Evaluation {
        counts,
        loss: if windows == 0 { 0.0 } else { loss / windows as f64 },
    })
}
