//! Acceptance suite. Prints one `[PASS]` / `[FAIL]` line per criterion and
//! exits nonzero if any criterion fails other than those listed in
//! `KNOWN_RED`. Pass criterion numbers as arguments to run a subset:
//!
//! ```text
//! cargo test --release -p sonn-cli --test acceptance -- 1 3 5
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonn_core::conv::ConvLayer;
use sonn_core::data::{
    decode_checkpoint, decode_signal, encode_checkpoint, encode_signal, generate, read_peaks, write_peaks,
    SyntheticConfig,
};
use sonn_core::network::{gradcheck, FaultInjection, GradcheckOptions, OptimizerState};
use sonn_core::pipeline::{
    compute_metrics, extract_peaks, make_target, match_peaks, ExtractOptions, MatchCounts, PeakSet, Signal1D,
};
use sonn_core::{GenerativeLayer, LayerShape, Model, NetworkConfig, Vector};

/// Criteria expected to fail, with the reason printed next to the result.
const KNOWN_RED: &[(u32, &str)] = &[(
    4,
    "several published percentages disagree with their own counts by more than 0.01 points",
)];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn cli(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    let argv = std::iter::once("sonn").chain(args.iter().copied());
    sonn_cli::run(argv, &mut out).map_err(|e| format!("`sonn {}` failed: {e}", args.join(" ")))?;
    Ok(String::from_utf8(out).expect("utf-8 output"))
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

fn random_vectors(rng: &mut ChaCha8Rng, channels: usize, len: usize) -> Vec<Vector> {
    (0..channels)
        .map(|_| Vector::from_fn(len, |_| rng.random_range(-1.0..1.0)).unwrap())
        .collect()
}

fn max_abs_diff<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn flat(v: &[Vector]) -> Vec<f64> {
    v.iter().flat_map(|x| x.iter().copied()).collect()
}

fn conv_reduction() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let in_ch = rng.random_range(1..=4);
        let out_ch = rng.random_range(1..=4);
        let kw = [1, 3, 5, 7, 9][rng.random_range(0..5)];
        let len = rng.random_range(kw.max(2)..=128);
        let layer = GenerativeLayer::init(LayerShape::new(in_ch, out_ch, kw, 1).unwrap(), seed).unwrap();
        let conv = ConvLayer::from_generative(&layer).unwrap();
        let inputs = random_vectors(&mut rng, in_ch, len);
        let d_out = random_vectors(&mut rng, out_ch, len);

        let (out, cache) = layer.forward(&inputs).unwrap();
        let g = layer.backward(&cache, &d_out).unwrap();
        let c = conv.backward(&inputs, &d_out).unwrap();
        worst = worst
            .max(max_abs_diff(&flat(&out), &flat(&conv.forward(&inputs).unwrap())))
            .max(max_abs_diff(&g.d_weights, &c.d_weights))
            .max(max_abs_diff(&g.d_biases, &c.d_biases))
            .max(max_abs_diff(&flat(&g.d_input), &flat(&c.d_input)));
    }
    outcome(
        worst <= 1e-10,
        format!("max abs error {worst:.2e} over 20 configs (tol 1e-10)"),
    )
}

fn vectorization() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        for kw in [1, 3, 5, 9] {
            for q in [1, 2, 3, 5, 7] {
                let in_ch = rng.random_range(1..=4);
                let out_ch = rng.random_range(1..=4);
                let len = rng.random_range(kw..=64);
                let layer = GenerativeLayer::init(LayerShape::new(in_ch, out_ch, kw, q).unwrap(), seed).unwrap();
                let inputs = random_vectors(&mut rng, in_ch, len);
                let reference = flat(&layer.forward_naive(&inputs).unwrap());
                worst = worst.max(max_abs_diff(&reference, &flat(&layer.forward(&inputs).unwrap().0)));
                cases += 1;
            }
        }
    }
    outcome(
        worst <= 1e-10,
        format!("max abs error {worst:.2e} over {cases} cases (tol 1e-10)"),
    )
}

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3000);
    let segment = Vector::from_fn(64, |_| rng.random_range(-1.0..1.0)).unwrap();
    let target = make_target(&PeakSet::new(vec![16, 48]).unwrap(), 64, 3).unwrap();
    let mut parts = Vec::new();
    let mut passed = true;
    for q in [1, 3, 5, 7] {
        let model = Model::init(NetworkConfig::default().with_order(q), q as u64).unwrap();
        let report = gradcheck(&model, &segment, &target, &GradcheckOptions::default()).unwrap();
        passed &= report.passed;
        parts.push(format!("Q={q} {:.1e}", report.max_rel_err));
    }
    let model = Model::init(NetworkConfig::default(), 3).unwrap();
    let faulty = GradcheckOptions {
        fault: Some(FaultInjection::WeightGrad),
        ..Default::default()
    };
    let report = gradcheck(&model, &segment, &target, &faulty).unwrap();
    passed &= !report.passed;
    parts.push(format!(
        "fault {:.1e} ({})",
        report.max_rel_err,
        if report.passed { "missed" } else { "caught" }
    ));
    outcome(passed, format!("max rel error {} (tol 1e-4)", parts.join(", ")))
}

/// Published rows: name, TP, FN, FP, Sen, Ppr, F1 (percent).
const TABLE: &[(&str, u64, u64, u64, f64, f64, f64)] = &[
    ("LSTM", 1_007_823, 18_272, 23_835, 98.20, 97.76, 97.88),
    ("P and T", 998_413, 27_682, 28_940, 97.31, 97.18, 97.23),
    ("Hamilton", 993_920, 32_175, 62_733, 96.82, 93.73, 95.14),
    ("Two M. Avg.", 992_305, 33_790, 46_349, 96.66, 95.34, 95.97),
    ("SWT", 975_222, 50_873, 27_936, 95.06, 97.20, 96.09),
    ("1D CNN deep", 1_022_874, 3_221, 13_931, 99.70, 98.63, 99.16),
    ("1D CNN Q=1", 1_020_544, 5_651, 22_820, 99.43, 97.83, 98.57),
    ("Self-ONN Q=3", 1_023_997, 2_098, 12_899, 99.80, 98.77, 99.28),
    ("Self-ONN Q=5", 1_024_088, 2_007, 14_263, 99.81, 98.63, 99.21),
    ("Self-ONN Q=7", 1_023_907, 2_188, 16_481, 99.79, 98.42, 99.10),
];

fn metric_arithmetic() -> Outcome {
    let mut off = Vec::new();
    for &(name, tp, fn_, fp, sen, ppr, f1) in TABLE {
        let m = compute_metrics(&MatchCounts {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
        });
        let got = [100.0 * m.sen, 100.0 * m.ppr, 100.0 * m.f1];
        let worst = got
            .iter()
            .zip([sen, ppr, f1])
            .map(|(g, w)| (g - w).abs())
            .fold(0.0, f64::max);
        // published values carry two decimals
        if worst > 0.01 + 1e-9 {
            off.push(format!(
                "{name} {:.2}/{:.2}/{:.2} vs {sen:.2}/{ppr:.2}/{f1:.2}",
                got[0], got[1], got[2]
            ));
        }
    }
    let ok = TABLE.len() - off.len();
    let mut detail = format!("{ok}/{} rows within 0.01 pp", TABLE.len());
    if !off.is_empty() {
        detail.push_str(&format!("; off: {}", off.join("; ")));
    }
    outcome(off.is_empty(), detail)
}

fn total_row(report: &str) -> (u64, u64) {
    let fields: Vec<&str> = report.lines().last().unwrap_or("").split('\t').collect();
    assert_eq!(fields.first(), Some(&"total"), "count report ends with a total row");
    (fields[6].parse().unwrap(), fields[7].parse().unwrap())
}

fn complexity() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5000);
    for _ in 0..10 {
        let (i, o) = (rng.random_range(1..=16usize), rng.random_range(1..=16usize));
        let k = [1usize, 3, 5, 7, 9][rng.random_range(0..5)];
        let q = rng.random_range(1..=7usize);
        let len = rng.random_range(k..=2000);
        let report = cli(&[
            "count",
            "--layer",
            &format!("{i},{o}"),
            "--k",
            &k.to_string(),
            "--q",
            &q.to_string(),
            "--seg-len",
            &len.to_string(),
            "--verify",
        ])?;
        let (params, macs) = total_row(&report);
        let closed = ((i * k * q + 1) * o) as u64;
        let closed_macs = (i * len * k * q * o) as u64;
        let layer = GenerativeLayer::zeros(LayerShape::new(i, o, k, q).unwrap()).unwrap();
        let inputs = vec![Vector::from_fn(len, |m| m as f64 / len as f64).unwrap(); i];
        let counted = layer.forward_naive_counted(&inputs).unwrap().1;
        if (params, macs) != (closed, closed_macs) || counted != macs {
            return Ok(outcome(
                false,
                format!("in={i} out={o} K={k} Q={q} M={len}: report {params}/{macs}, closed {closed}/{closed_macs}, counted {counted}"),
            ));
        }
    }
    let (_, q3) = total_row(&cli(&["count", "--q", "3", "--verify"])?);
    let (_, q1) = total_row(&cli(&["count", "--q", "1", "--verify"])?);
    Ok(outcome(
        q3 == 3 * q1,
        format!("10 layer configs exact; default model MACs Q=3 {q3} / Q=1 {q1}"),
    ))
}

fn formats() -> Result<Outcome, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let record = generate(&SyntheticConfig {
        duration_s: 60.0,
        seed: 7,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?
    .record;

    let back = decode_signal(&encode_signal(&record.signal)).map_err(|e| e.to_string())?;
    let signal_ok = back.sample_rate_hz == record.signal.sample_rate_hz
        && back
            .samples
            .iter()
            .zip(record.signal.samples.iter())
            .all(|(b, a)| *b == *a as f32 as f64);

    let peaks_path = dir.path().join("p.csv");
    write_peaks(&peaks_path, &record.peaks, &record.arrhythmia).map_err(|e| e.to_string())?;
    let (peaks, flags) = read_peaks(&peaks_path).map_err(|e| e.to_string())?;
    let peaks_ok = peaks == record.peaks && flags == record.arrhythmia;

    let model = Model::init(NetworkConfig::default(), 1).unwrap();
    let mut opt = OptimizerState::adam(0.001, &model);
    opt.t = 3;
    let bytes = encode_checkpoint(&model, 400, Some(&opt));
    let ckpt = decode_checkpoint(&bytes).map_err(|e| e.to_string())?;
    let ckpt_ok = ckpt.sample_rate_hz == 400
        && ckpt.optimizer.as_ref() == Some(&opt)
        && model
            .params()
            .zip(ckpt.model.params())
            .all(|(a, b)| a as f32 as f64 == b);

    // magic, version and shape fields of both binary formats
    let mut rejected = 0;
    let mut missed = Vec::new();
    let sig_bytes = encode_signal(&Signal1D::new(Vector::new(vec![0.25; 32]).unwrap(), 400).unwrap());
    for pos in (0..10).chain(14..22) {
        for flip in 1..=255u8 {
            let mut bad = sig_bytes.clone();
            bad[pos] ^= flip;
            if decode_signal(&bad).is_err() {
                rejected += 1;
            } else {
                missed.push(format!("signal byte {pos}"));
            }
        }
    }
    let mut guarded: Vec<usize> = (0..11).collect();
    // layer blocks follow the config and precede the one-byte optimizer flag
    let bare = encode_checkpoint(&model, 400, None).len();
    let mut pos = bare - 1 - 4 * model.param_len() - 16 * model.layers().len();
    for layer in model.layers() {
        guarded.extend(pos..pos + 16);
        pos += 16 + 4 * (layer.weights().len() + layer.biases().len());
    }
    for &pos in &guarded {
        for flip in 1..=255u8 {
            let mut bad = bytes.clone();
            bad[pos] ^= flip;
            if decode_checkpoint(&bad).is_err() {
                rejected += 1;
            } else {
                missed.push(format!("checkpoint byte {pos}"));
            }
        }
    }

    let opts = ExtractOptions::default();
    let mut round_trip_errors = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let mut at = rng.random_range(0..50);
        let mut idx = Vec::new();
        while at < 8000 {
            idx.push(at);
            at += opts.refractory_samples() + 1 + rng.random_range(0..400);
        }
        let truth = PeakSet::new(idx).unwrap();
        let target: Vec<f64> = make_target(&truth, 8000, 5).unwrap().iter().map(|t| 0.9 * t).collect();
        let c = match_peaks(extract_peaks(&target, &opts).indices(), truth.indices(), 30).unwrap();
        round_trip_errors += c.false_positives + c.false_negatives;
    }

    missed.dedup();
    let passed = signal_ok && peaks_ok && ckpt_ok && missed.is_empty() && round_trip_errors == 0;
    Ok(outcome(
        passed,
        format!(
            "round trips signal={signal_ok} peaks={peaks_ok} checkpoint={ckpt_ok}; {rejected} corruptions rejected{}; target/extract FP+FN={round_trip_errors}",
            if missed.is_empty() { String::new() } else { format!(", missed {}", missed.join(", ")) }
        ),
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn generate_dataset(dir: &Path) -> Result<PathBuf, String> {
    let data = dir.join("data");
    cli(&[
        "generate",
        "--out",
        p(&data),
        "--count",
        "10",
        "--duration-s",
        "60",
        "--seed",
        "100",
    ])?;
    Ok(data)
}

/// Trains on the first 8 records and scores detection on the last 2 with
/// the full detect/eval path.
fn train_and_test(dir: &Path, data: &Path, q: usize, seed: u64) -> Result<f64, String> {
    let ckpt = dir.join(format!("q{q}_s{seed}.ckpt"));
    cli(&[
        "train",
        "--data",
        p(data),
        "--q",
        &q.to_string(),
        "--epochs",
        "50",
        "--lr",
        "0.001",
        "--seed",
        &seed.to_string(),
        "--val-frac",
        "0.2",
        "--checkpoint",
        p(&ckpt),
    ])?;
    let mut counts = [0u64; 3];
    for id in [8, 9] {
        let sig = data.join(format!("rec_{id:03}.sig"));
        let truth = data.join(format!("rec_{id:03}.csv"));
        let pred = dir.join(format!("q{q}_s{seed}_{id}.csv"));
        cli(&[
            "detect",
            "--checkpoint",
            p(&ckpt),
            "--signal",
            p(&sig),
            "--out",
            p(&pred),
        ])?;
        let tsv = cli(&[
            "eval",
            "--pred",
            p(&pred),
            "--truth",
            p(&truth),
            "--tol-ms",
            "75",
            "--tsv",
        ])?;
        let row: Vec<u64> = tsv
            .lines()
            .nth(1)
            .unwrap()
            .split('\t')
            .take(3)
            .map(|v| v.parse().unwrap())
            .collect();
        counts.iter_mut().zip(row).for_each(|(c, v)| *c += v);
    }
    Ok(compute_metrics(&MatchCounts {
        true_positives: counts[0],
        false_positives: counts[1],
        false_negatives: counts[2],
    })
    .f1)
}

fn end_to_end() -> Result<Outcome, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = generate_dataset(dir.path())?;
    let mut scores = Vec::new();
    for q in [3, 1] {
        let mut f1 = Vec::new();
        for seed in 0..3 {
            let started = Instant::now();
            let score = train_and_test(dir.path(), &data, q, seed)?;
            eprintln!(
                "  Q={q} seed {seed}: test F1 {score:.4} ({:.0} s)",
                started.elapsed().as_secs_f64()
            );
            f1.push(score);
        }
        scores.push(median(f1));
    }
    let (q3, q1) = (scores[0], scores[1]);
    Ok(outcome(
        q3 >= 0.95 && q1 <= q3 + 0.01,
        format!("median test F1 over 3 seeds: Q=3 {q3:.4} (need >= 0.95), Q=1 {q1:.4} (need <= Q=3 + 0.01)"),
    ))
}

fn determinism() -> Result<Outcome, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        cli(&[
            "generate",
            "--out",
            p(out),
            "--count",
            "3",
            "--duration-s",
            "20",
            "--seed",
            "42",
        ])?;
    }
    let mut generator_ok = true;
    for name in ["rec_000", "rec_001", "rec_002"] {
        for ext in ["sig", "csv"] {
            let file = format!("{name}.{ext}");
            generator_ok &= fs::read(a.join(&file)).ok() == fs::read(b.join(&file)).ok();
        }
    }
    let mut checkpoints = Vec::new();
    for name in ["one.ckpt", "two.ckpt"] {
        let path = dir.path().join(name);
        cli(&[
            "train",
            "--data",
            p(&a),
            "--epochs",
            "3",
            "--seed",
            "9",
            "--restarts",
            "2",
            "--checkpoint",
            p(&path),
        ])?;
        checkpoints.push(fs::read(&path).map_err(|e| e.to_string())?);
    }
    let train_ok = checkpoints[0] == checkpoints[1];
    Ok(outcome(
        generator_ok && train_ok,
        format!("generator byte-identical: {generator_ok}; train checkpoints byte-identical: {train_ok}"),
    ))
}

type Criterion = fn() -> Result<Outcome, String>;

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: Vec<(u32, &str, Criterion)> = vec![
        (1, "convolution reduction", || Ok(conv_reduction())),
        (2, "vectorized forward", || Ok(vectorization())),
        (3, "gradient check", || Ok(gradients())),
        (4, "metric arithmetic", || Ok(metric_arithmetic())),
        (5, "complexity counts", complexity),
        (6, "end-to-end detection", end_to_end),
        (7, "round trips and formats", formats),
        (8, "determinism", determinism),
    ];
    let mut unexpected = 0;
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let result = run().unwrap_or_else(|e| outcome(false, e));
        let secs = started.elapsed().as_secs_f64();
        let known = KNOWN_RED.iter().find(|(k, _)| *k == n);
        let tag = if result.passed { "PASS" } else { "FAIL" };
        let note = match (result.passed, known) {
            (false, Some((_, why))) => format!(" [known: {why}]"),
            _ => String::new(),
        };
        println!("[{tag}] {n} {name}: {} ({secs:.1} s){note}", result.detail);
        if !result.passed && known.is_none() {
            unexpected += 1;
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
