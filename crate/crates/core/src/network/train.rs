use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{bce_loss, Layer, Model, ModelGradients, OptimizerState};
use crate::tensor::Vector;

/// A normalized input segment and its pulse-train target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vector,
    pub target: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            seed: 0,
        }
    }
}

/// Mini-batch training. Each epoch reshuffles the examples with a seeded
/// generator; per batch the segment gradients are summed in batch order,
/// averaged, and applied in one optimizer step.
///
/// `on_epoch` sees the epoch index, the mean training loss of that epoch
/// (measured during the forward passes), and the updated model. Returns the
/// per-epoch loss trace.
pub fn train<L: Layer>(
    model: &mut Model<L>,
    optimizer: &mut OptimizerState,
    data: &[Example],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64, &Model<L>) -> Result<()>,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut acc = ModelGradients::zeros_like(model);
            for &idx in batch {
                let ex = &data[idx];
                let (pred, cache) = model.run_for_training(&ex.input)?;
                let (loss, d_pred) = bce_loss(&pred, &ex.target)?;
                total += loss;
                acc.add_assign(&model.backward(&cache, &d_pred)?)?;
            }
            acc.scale(1.0 / batch.len() as f64);
            optimizer.step(model, &acc)?;
        }
        let mean = total / data.len() as f64;
        trace.push(mean);
        on_epoch(epoch, mean, model)?;
    }
    Ok(trace)
}

impl<L: Layer> Model<L> {
    fn run_for_training(&self, segment: &Vector) -> Result<(Vector, crate::network::ModelCache<L::Cache>)> {
        let (pred, cache) = self.run(segment, true)?;
        Ok((pred, cache.expect("cache requested")))
    }
}
