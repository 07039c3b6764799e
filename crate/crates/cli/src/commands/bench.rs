use std::io::Write;
use std::time::Instant;

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonn_core::conv::ConvLayer;
use sonn_core::{GenerativeLayer, LayerShape, Vector};

use super::{row, tsv};
use crate::{usage, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchFault {
    /// Perturb one output of the matrix-product path before the gate.
    Gemm,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 3)]
    pub q: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 8000)]
    pub seg_len: usize,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = 16)]
    pub in_channels: usize,
    #[arg(long, default_value_t = 16)]
    pub out_channels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub fault_inject: Option<BenchFault>,
}

/// Largest entrywise difference, relative to `max(1, |a|)`.
fn max_diff(a: &[Vector], b: &[Vector]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y.iter()))
        .map(|(x, y)| (x - y).abs() / x.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn median_ms(iters: usize, mut f: impl FnMut() -> CliResult<Vec<Vector>>) -> CliResult<f64> {
    let mut times = Vec::with_capacity(iters);
    for _ in 0..iters {
        let start = Instant::now();
        std::hint::black_box(f()?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    Ok(if times.len() % 2 == 1 {
        times[mid]
    } else {
        (times[mid - 1] + times[mid]) / 2.0
    })
}

pub fn bench(args: &BenchArgs, out: &mut dyn Write) -> CliResult {
    if args.iters == 0 || args.seg_len == 0 {
        return Err(usage("--iters and --seg-len must be positive"));
    }
    let shape =
        LayerShape::new(args.in_channels, args.out_channels, args.k, args.q).map_err(|e| usage(e.to_string()))?;
    let layer = GenerativeLayer::init(shape, args.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(1));
    let inputs = (0..args.in_channels)
        .map(|_| Vector::from_fn(args.seg_len, |_| rng.random_range(-1.0..1.0)))
        .collect::<Result<Vec<_>, _>>()?;
    let conv = if args.q == 1 {
        Some(ConvLayer::from_generative(&layer)?)
    } else {
        None
    };

    let gemm = |inputs: &[Vector]| -> CliResult<Vec<Vector>> { Ok(layer.forward(inputs)?.0) };
    let reference = layer.forward_naive(&inputs)?;
    let mut candidates = vec![
        ("qconv", layer.forward_by_convolutions(&inputs)?),
        ("gemm", gemm(&inputs)?),
    ];
    if let Some(conv) = &conv {
        candidates.push(("conv", conv.forward(&inputs)?));
    }
    if args.fault_inject == Some(BenchFault::Gemm) {
        let out0 = &mut candidates[1].1[0];
        let mut data = out0.to_vec();
        data[0] += 1e-6;
        *out0 = Vector::new(data)?;
    }
    for (name, outputs) in &candidates {
        let diff = max_diff(&reference, outputs);
        if diff > 1e-9 {
            return Err(CliError::Check(format!(
                "{name} disagrees with the reference pass by {diff:.3e}; no timings taken"
            )));
        }
    }

    let mut timings = vec![
        ("naive", median_ms(args.iters, || Ok(layer.forward_naive(&inputs)?))?),
        (
            "qconv",
            median_ms(args.iters, || Ok(layer.forward_by_convolutions(&inputs)?))?,
        ),
        ("gemm", median_ms(args.iters, || gemm(&inputs))?),
    ];
    if let Some(conv) = &conv {
        timings.push(("conv", median_ms(args.iters, || Ok(conv.forward(&inputs)?))?));
    }
    tsv(
        out,
        &row!["impl", "q", "k", "in", "out", "len", "iters", "median_ms", "macs"],
    )?;
    for (name, ms) in timings {
        tsv(
            out,
            &row![
                name,
                args.q,
                args.k,
                args.in_channels,
                args.out_channels,
                args.seg_len,
                args.iters,
                format!("{ms:.3}"),
                shape.mac_count(args.seg_len)
            ],
        )?;
    }
    Ok(())
}
