use std::io::Write;

use clap::Args;
use sonn_core::{GenerativeLayer, LayerShape, Vector};

use super::{check_seg_len, row, tsv, NetArgs};
use crate::{usage, CliError, CliResult};

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct CountArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, default_value_t = 8000)]
    pub seg_len: usize,
    /// Count one layer with `IN,OUT` channels instead of the network.
    #[arg(long)]
    pub layer: Option<String>,
    /// Also run the reference forward pass with a multiply counter and
    /// require it to agree with the closed forms.
    #[arg(long)]
    pub verify: bool,
}

fn parse_layer(text: &str) -> CliResult<(usize, usize)> {
    match text.split_once(',').map(|(a, b)| (a.trim().parse(), b.trim().parse())) {
        Some((Ok(i), Ok(o))) => Ok((i, o)),
        _ => Err(usage(format!("--layer expects IN,OUT, got `{text}`"))),
    }
}

/// Multiplications counted by the instrumented reference pass on a layer
/// with the given shape and input length.
pub fn instrumented_macs(shape: LayerShape, len: usize) -> CliResult<u64> {
    let layer = GenerativeLayer::zeros(shape)?;
    let input = Vector::from_fn(len, |m| ((m % 7) as f64 - 3.0) / 4.0)?;
    let inputs = vec![input; shape.in_channels];
    Ok(layer.forward_naive_counted(&inputs)?.1)
}

pub fn count(args: &CountArgs, out: &mut dyn Write) -> CliResult {
    let layers: Vec<(LayerShape, usize)> = match &args.layer {
        Some(text) => {
            let (i, o) = parse_layer(text)?;
            let shape = LayerShape::new(i, o, args.net.k, args.net.q).map_err(|e| usage(e.to_string()))?;
            if args.seg_len == 0 {
                return Err(usage("--seg-len must be positive"));
            }
            vec![(shape, args.seg_len)]
        }
        None => {
            let config = args.net.config()?;
            check_seg_len(&config, args.seg_len)?;
            let shapes = config.layer_shapes()?;
            shapes.into_iter().zip(config.layer_lengths(args.seg_len)).collect()
        }
    };

    tsv(
        out,
        &row!["layer", "in", "out", "k", "q", "len", "params", "macs", "params_k", "macs_m"],
    )?;
    let (mut params, mut macs) = (0u64, 0u64);
    for (idx, (shape, len)) in layers.iter().enumerate() {
        let (p, m) = (shape.param_count() as u64, shape.mac_count(*len));
        if args.verify {
            let counted = instrumented_macs(*shape, *len)?;
            if counted != m {
                return Err(CliError::Check(format!(
                    "layer {idx}: closed form gives {m} MACs, instrumented pass counted {counted}"
                )));
            }
        }
        params += p;
        macs += m;
        tsv(
            out,
            &row![
                idx,
                shape.in_channels,
                shape.out_channels,
                shape.kernel_width,
                shape.order,
                len,
                p,
                m,
                format!("{:.3}", p as f64 / 1e3),
                format!("{:.3}", m as f64 / 1e6)
            ],
        )?;
    }
    tsv(
        out,
        &row![
            "total",
            "-",
            "-",
            "-",
            "-",
            "-",
            params,
            macs,
            format!("{:.3}", params as f64 / 1e3),
            format!("{:.3}", macs as f64 / 1e6)
        ],
    )
}
