use std::io::Write;

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonn_core::conv::ConvLayer;
use sonn_core::network::{self, FaultInjection, GradcheckOptions, GradcheckReport};
use sonn_core::pipeline::{make_target, PeakSet};
use sonn_core::{Model, Vector};

use super::{check_seg_len, row, tsv, NetArgs};
use crate::{usage, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GradFault {
    /// Scale the analytic weight gradients by 1.01.
    WeightGrad,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub seg_len: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, value_enum)]
    pub fault_inject: Option<GradFault>,
}

fn report_row(graph: &str, q: usize, r: &GradcheckReport, note: &str) -> [String; 8] {
    let (layer, is_bias, index) = r.worst;
    row![
        graph,
        q,
        r.params_checked,
        format!("{:.3e}", r.max_rel_err),
        format!("{:.1e}", r.tol),
        format!("{layer}:{}[{index}]", if is_bias { "b" } else { "w" }),
        if r.passed { "pass" } else { "fail" },
        note
    ]
}

pub fn gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> CliResult {
    let config = args.net.config()?;
    check_seg_len(&config, args.seg_len)?;
    if !(args.h > 0.0 && args.tol > 0.0) {
        return Err(usage("--h and --tol must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let segment = Vector::from_fn(args.seg_len, |_| rng.random_range(-1.0..1.0))?;
    let peaks = PeakSet::new(vec![args.seg_len / 4, 3 * args.seg_len / 4])?;
    let target = make_target(&peaks, args.seg_len, 3)?;
    let opts = GradcheckOptions {
        h: args.h,
        tol: args.tol,
        fault: args
            .fault_inject
            .map(|GradFault::WeightGrad| FaultInjection::WeightGrad),
    };
    let model = Model::init(config.clone(), args.seed)?;
    let q = config.q_order;

    let report = network::gradcheck(&model, &segment, &target, &opts)?;
    let mut passed = report.passed;
    let note = if q == 1 { "conv-equivalent" } else { "-" };
    tsv(
        out,
        &row!["graph", "q", "params", "max_rel_err", "tol", "worst", "result", "note"],
    )?;
    tsv(out, &report_row("generative", q, &report, note))?;
    if q == 1 {
        let layers = model
            .layers()
            .iter()
            .map(ConvLayer::from_generative)
            .collect::<Result<Vec<_>, _>>()?;
        let conv = Model::from_layers(config, layers)?;
        let conv_report = network::gradcheck(&conv, &segment, &target, &opts)?;
        passed &= conv_report.passed;
        tsv(out, &report_row("conv", q, &conv_report, note))?;
    }
    if passed {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "max relative error {:.3e} exceeds {:.1e}",
            report.max_rel_err, args.tol
        )))
    }
}
