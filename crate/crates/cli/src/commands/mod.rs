mod bench;
mod count;
mod detect;
mod eval;
mod generate;
mod gradcheck;
mod train;

use std::io::Write;

use clap::{ArgAction, Args};
use sonn_core::NetworkConfig;

use crate::{usage, CliResult};

pub use bench::{bench, BenchArgs};
pub use count::{count, CountArgs};
pub use detect::{detect, DetectArgs};
pub use eval::{eval, EvalArgs};
pub use generate::{generate, GenerateArgs};
pub use gradcheck::{gradcheck, GradcheckArgs};
pub use train::{train, TrainArgs};

/// Network shape flags shared by the commands that build a model.
#[derive(Debug, Clone, Args)]
pub struct NetArgs {
    /// Taylor order of every layer (1 gives the plain CNN).
    #[arg(long, default_value_t = 3)]
    pub q: usize,
    /// Kernel width of every layer (odd).
    #[arg(long = "k", visible_alias = "kernel-width", default_value_t = 5)]
    pub k: usize,
    /// Encoder stage channels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8,16")]
    pub encoder: Vec<usize>,
    /// Bottleneck channels; 0 drops the stage.
    #[arg(long, default_value_t = 32)]
    pub bottleneck: usize,
    /// Decoder stage channels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "16,8")]
    pub decoder: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub pool: usize,
    /// Concatenate encoder activations into the decoder.
    #[arg(long, default_value_t = true, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    pub skip: bool,
}

impl NetArgs {
    pub fn config(&self) -> CliResult<NetworkConfig> {
        let config = NetworkConfig {
            q_order: self.q,
            kernel_width: self.k,
            encoder_channels: self.encoder.clone(),
            bottleneck_channels: self.bottleneck,
            decoder_channels: self.decoder.clone(),
            output_channels: 1,
            pool_factor: self.pool,
            skip_connections: self.skip,
        };
        config.validate().map_err(|e| usage(e.to_string()))?;
        Ok(config)
    }
}

pub(crate) fn check_seg_len(config: &NetworkConfig, seg_len: usize) -> CliResult {
    let multiple = config.length_multiple();
    if seg_len == 0 || !seg_len.is_multiple_of(multiple) {
        return Err(usage(format!(
            "--seg-len must be a positive multiple of {multiple}, got {seg_len}"
        )));
    }
    Ok(())
}

pub(crate) fn tsv(out: &mut dyn Write, fields: &[String]) -> CliResult {
    writeln!(out, "{}", fields.join("\t"))?;
    Ok(())
}

macro_rules! row {
    ($($v:expr),* $(,)?) => { [$($v.to_string()),*] };
}
pub(crate) use row;
