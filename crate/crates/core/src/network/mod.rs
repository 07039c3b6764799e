//! UNet-style encoder/decoder built from generative layers.
//!
//! Stage layout for the default configuration:
//!
//! ```text
//! encoder:    layer → tanh → maxpool        (×2, channels 8, 16)
//! bottleneck: layer → tanh                  (32)
//! decoder:    upsample → concat skip → layer → tanh   (×2, channels 16, 8)
//! head:       layer → sigmoid               (1)
//! ```
//!
//! All layers use "same" zero padding, so the prediction has the length of
//! the input segment.

mod gradcheck;
mod loss;
mod optim;
mod train;

pub use gradcheck::{gradcheck, FaultInjection, GradcheckOptions, GradcheckReport};
pub use loss::bce_loss;
pub use optim::{OptimizerKind, OptimizerState};
pub use train::{train, Example, TrainConfig};

use crate::error::{Error, Result};
use crate::generative::{ForwardCache, GenerativeLayer, LayerGradients, LayerShape};
use crate::tensor::Vector;

/// Anything the graph can run as a stage: forward with a cache, backward
/// from that cache, and flat access to weights and biases.
pub trait Layer: Clone {
    type Cache;

    fn shape(&self) -> LayerShape;
    fn forward(&self, inputs: &[Vector]) -> Result<(Vec<Vector>, Self::Cache)>;
    fn backward(&self, cache: &Self::Cache, d_output: &[Vector]) -> Result<LayerGradients>;
    fn weights(&self) -> &[f64];
    fn biases(&self) -> &[f64];
    fn weights_mut(&mut self) -> &mut [f64];
    fn biases_mut(&mut self) -> &mut [f64];
}

impl Layer for GenerativeLayer {
    type Cache = ForwardCache;

    fn shape(&self) -> LayerShape {
        GenerativeLayer::shape(self)
    }

    fn forward(&self, inputs: &[Vector]) -> Result<(Vec<Vector>, ForwardCache)> {
        GenerativeLayer::forward(self, inputs)
    }

    fn backward(&self, cache: &ForwardCache, d_output: &[Vector]) -> Result<LayerGradients> {
        GenerativeLayer::backward(self, cache, d_output)
    }

    fn weights(&self) -> &[f64] {
        GenerativeLayer::weights(self)
    }

    fn biases(&self) -> &[f64] {
        GenerativeLayer::biases(self)
    }

    fn weights_mut(&mut self) -> &mut [f64] {
        GenerativeLayer::weights_mut(self)
    }

    fn biases_mut(&mut self) -> &mut [f64] {
        GenerativeLayer::biases_mut(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkConfig {
    /// Taylor order of every layer, head included.
    pub q_order: usize,
    pub kernel_width: usize,
    pub encoder_channels: Vec<usize>,
    /// Zero removes the bottleneck stage.
    pub bottleneck_channels: usize,
    pub decoder_channels: Vec<usize>,
    pub output_channels: usize,
    pub pool_factor: usize,
    pub skip_connections: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            q_order: 3,
            kernel_width: 5,
            encoder_channels: vec![8, 16],
            bottleneck_channels: 32,
            decoder_channels: vec![16, 8],
            output_channels: 1,
            pool_factor: 2,
            skip_connections: true,
        }
    }
}

impl NetworkConfig {
    pub fn with_order(mut self, q_order: usize) -> Self {
        self.q_order = q_order;
        self
    }

    /// A network made of the output head alone.
    pub fn head_only(q_order: usize, kernel_width: usize) -> Self {
        Self {
            q_order,
            kernel_width,
            encoder_channels: vec![],
            bottleneck_channels: 0,
            decoder_channels: vec![],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_order == 0 {
            return Err(Error::invalid("q_order must be at least 1"));
        }
        if self.kernel_width.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "kernel_width must be odd, got {}",
                self.kernel_width
            )));
        }
        if self.encoder_channels.len() != self.decoder_channels.len() {
            return Err(Error::invalid(
                "encoder and decoder must have the same number of stages",
            ));
        }
        if self
            .encoder_channels
            .iter()
            .chain(&self.decoder_channels)
            .any(|&c| c == 0)
        {
            return Err(Error::invalid("stage channel counts must be positive"));
        }
        if self.output_channels != 1 {
            return Err(Error::invalid("the head must produce exactly one channel"));
        }
        if self.pool_factor == 0 {
            return Err(Error::invalid("pool_factor must be at least 1"));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.encoder_channels.len()
    }

    /// Segment lengths must be a multiple of this.
    pub fn length_multiple(&self) -> usize {
        self.pool_factor.pow(self.depth() as u32)
    }

    /// Shapes of every layer in execution order: encoder, bottleneck,
    /// decoder, head.
    pub fn layer_shapes(&self) -> Result<Vec<LayerShape>> {
        self.validate()?;
        let (k, q) = (self.kernel_width, self.q_order);
        let mut shapes = Vec::new();
        let mut channels = 1;
        for &c in &self.encoder_channels {
            shapes.push(LayerShape::new(channels, c, k, q)?);
            channels = c;
        }
        if self.bottleneck_channels > 0 {
            shapes.push(LayerShape::new(channels, self.bottleneck_channels, k, q)?);
            channels = self.bottleneck_channels;
        }
        for (j, &c) in self.decoder_channels.iter().enumerate() {
            let skip = if self.skip_connections {
                self.encoder_channels[self.depth() - 1 - j]
            } else {
                0
            };
            shapes.push(LayerShape::new(channels + skip, c, k, q)?);
            channels = c;
        }
        shapes.push(LayerShape::new(channels, self.output_channels, k, q)?);
        Ok(shapes)
    }

    /// Output length of each layer for an input segment of `len` samples.
    pub fn layer_lengths(&self, len: usize) -> Vec<usize> {
        let mut lengths = Vec::new();
        let mut cur = len;
        for _ in &self.encoder_channels {
            lengths.push(cur);
            cur /= self.pool_factor;
        }
        if self.bottleneck_channels > 0 {
            lengths.push(cur);
        }
        for _ in &self.decoder_channels {
            cur *= self.pool_factor;
            lengths.push(cur);
        }
        lengths.push(cur);
        lengths
    }

    /// Total number of generative neurons (output channels over all layers).
    pub fn neuron_count(&self) -> usize {
        self.encoder_channels.iter().sum::<usize>()
            + self.bottleneck_channels
            + self.decoder_channels.iter().sum::<usize>()
            + self.output_channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<L = GenerativeLayer> {
    config: NetworkConfig,
    layers: Vec<L>,
    mode: Mode,
    // bumped on every parameter mutation so stale caches can be refused
    generation: u64,
}

/// Per-layer parameter gradients, laid out like the layer's storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients {
    pub layers: Vec<ParamGradients>,
}

impl ModelGradients {
    pub fn zeros_like<L: Layer>(model: &Model<L>) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| ParamGradients {
                    weights: vec![0.0; l.weights().len()],
                    biases: vec![0.0; l.biases().len()],
                })
                .collect(),
        }
    }

    /// Flat view in optimizer order: per layer, weights then biases.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn add_assign(&mut self, other: &ModelGradients) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::invalid("gradient layer count mismatch"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if a.weights.len() != b.weights.len() || a.biases.len() != b.biases.len() {
                return Err(Error::invalid("gradient shape mismatch"));
            }
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.biases.iter_mut().zip(&b.biases).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.iter_mut().for_each(|g| *g *= factor);
    }
}

#[derive(Clone, Copy)]
enum StageKind {
    Encoder(usize),
    Bottleneck,
    Decoder(usize),
    Head,
}

/// Everything a train-mode forward pass keeps for [`Model::backward`].
#[derive(Debug, Clone)]
pub struct ModelCache<C> {
    generation: u64,
    layer_caches: Vec<C>,
    /// tanh outputs of every hidden layer, in layer order
    activations: Vec<Vec<Vector>>,
    /// argmax indices per encoder stage and channel
    pool_argmax: Vec<Vec<Vec<usize>>>,
    prediction: Vector,
}

impl<C> ModelCache<C> {
    pub fn prediction(&self) -> &Vector {
        &self.prediction
    }
}

impl Model<GenerativeLayer> {
    /// Randomly initialized generative model. Each layer draws from its own
    /// seed derived from `seed` and the layer index.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        let layers = config
            .layer_shapes()?
            .into_iter()
            .enumerate()
            .map(|(idx, shape)| GenerativeLayer::init(shape, layer_seed(seed, idx)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(config, layers)
    }

    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        let layers = config
            .layer_shapes()?
            .into_iter()
            .map(GenerativeLayer::zeros)
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(config, layers)
    }

    /// Parameter count summed over layers, biases included.
    pub fn count_params(&self) -> usize {
        self.layers.iter().map(|l| l.count_params()).sum()
    }

    pub fn count_macs(&self, seg_len: usize) -> u64 {
        self.layers
            .iter()
            .zip(self.config.layer_lengths(seg_len))
            .map(|(l, len)| l.count_macs(len))
            .sum()
    }
}

fn layer_seed(seed: u64, idx: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(idx as u64 + 1)
}

impl<L: Layer> Model<L> {
    pub fn from_layers(config: NetworkConfig, layers: Vec<L>) -> Result<Self> {
        let shapes = config.layer_shapes()?;
        if shapes.len() != layers.len() {
            return Err(Error::invalid(format!(
                "config describes {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (idx, (expected, layer)) in shapes.iter().zip(&layers).enumerate() {
            if *expected != layer.shape() {
                return Err(Error::invalid(format!(
                    "layer {idx} has shape {:?}, config requires {expected:?}",
                    layer.shape()
                )));
            }
        }
        Ok(Self {
            config,
            layers,
            mode: Mode::Train,
            generation: 0,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[L] {
        &self.layers
    }

    pub fn layer_mut(&mut self, idx: usize) -> &mut L {
        self.generation += 1;
        &mut self.layers[idx]
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Number of scalars an optimizer updates.
    pub fn param_len(&self) -> usize {
        self.layers.iter().map(|l| l.weights().len() + l.biases().len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights().iter().chain(l.biases()).copied())
    }

    /// Visits every parameter mutably in optimizer order.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        self.generation += 1;
        let mut idx = 0;
        for layer in &mut self.layers {
            for w in layer.weights_mut() {
                f(idx, w);
                idx += 1;
            }
            for b in layer.biases_mut() {
                f(idx, b);
                idx += 1;
            }
        }
    }

    fn stages(&self) -> Vec<StageKind> {
        let mut stages: Vec<StageKind> = (0..self.config.depth()).map(StageKind::Encoder).collect();
        if self.config.bottleneck_channels > 0 {
            stages.push(StageKind::Bottleneck);
        }
        stages.extend((0..self.config.depth()).map(StageKind::Decoder));
        stages.push(StageKind::Head);
        stages
    }

    pub fn check_segment(&self, segment: &Vector) -> Result<()> {
        let multiple = self.config.length_multiple();
        if !segment.len().is_multiple_of(multiple) {
            return Err(Error::invalid(format!(
                "segment length {} is not a multiple of {multiple}",
                segment.len()
            )));
        }
        if let Some(v) = segment.iter().find(|v| v.abs() > 1.0 + 1e-9) {
            return Err(Error::invalid(format!(
                "segment is not normalized to [-1, 1] (found {v})"
            )));
        }
        Ok(())
    }

    /// Inference pass returning only the per-sample probabilities.
    pub fn predict(&self, segment: &Vector) -> Result<Vector> {
        self.run(segment, false).map(|(p, _)| p)
    }

    /// Runs the graph. In [`Mode::Train`] the returned cache feeds
    /// [`backward`](Self::backward); in [`Mode::Infer`] no cache is kept.
    pub fn forward(&self, segment: &Vector) -> Result<(Vector, Option<ModelCache<L::Cache>>)> {
        self.run(segment, self.mode == Mode::Train)
    }

    fn run(&self, segment: &Vector, keep: bool) -> Result<(Vector, Option<ModelCache<L::Cache>>)> {
        self.check_segment(segment)?;
        let factor = self.config.pool_factor;
        let mut layer_caches = Vec::new();
        let mut activations = Vec::new();
        let mut pool_argmax = Vec::new();
        let mut skips: Vec<Vec<Vector>> = Vec::new();
        let mut x = vec![segment.clone()];
        let mut logits = None;

        for (layer, stage) in self.layers.iter().zip(self.stages()) {
            if let StageKind::Decoder(j) = stage {
                let mut up = x.iter().map(|c| upsample(c, factor)).collect::<Result<Vec<_>>>()?;
                if self.config.skip_connections {
                    up.extend(skips[self.config.depth() - 1 - j].iter().cloned());
                }
                x = up;
            }
            let (out, cache) = layer.forward(&x)?;
            if keep {
                layer_caches.push(cache);
            }
            if let StageKind::Head = stage {
                logits = Some(out);
                break;
            }
            let act = out.iter().map(tanh).collect::<Result<Vec<_>>>()?;
            x = act.clone();
            if let StageKind::Encoder(_) = stage {
                let mut pooled = Vec::with_capacity(act.len());
                let mut argmax = Vec::with_capacity(act.len());
                for a in &act {
                    let (p, idx) = maxpool(a, factor)?;
                    pooled.push(p);
                    argmax.push(idx);
                }
                skips.push(act.clone());
                if keep {
                    pool_argmax.push(argmax);
                }
                x = pooled;
            }
            if keep {
                activations.push(act);
            }
        }

        let logits = logits.ok_or_else(|| Error::InvalidState("model has no head layer".into()))?;
        let prediction = Vector::new(logits[0].iter().map(|&z| sigmoid(z)).collect())?;
        let cache = keep.then(|| ModelCache {
            generation: self.generation,
            layer_caches,
            activations,
            pool_argmax,
            prediction: prediction.clone(),
        });
        Ok((prediction, cache))
    }

    /// Gradients of the loss for every layer given `d_prediction`, the loss
    /// gradient with respect to the sigmoid output.
    pub fn backward(&self, cache: &ModelCache<L::Cache>, d_prediction: &Vector) -> Result<ModelGradients> {
        if cache.generation != self.generation || cache.layer_caches.len() != self.layers.len() {
            return Err(Error::InvalidState(
                "cache was produced before the model parameters changed".into(),
            ));
        }
        if d_prediction.len() != cache.prediction.len() {
            return Err(Error::invalid("prediction gradient length mismatch"));
        }
        let factor = self.config.pool_factor;
        let depth = self.config.depth();
        let d_logits = Vector::new(
            d_prediction
                .iter()
                .zip(cache.prediction.iter())
                .map(|(d, p)| d * p * (1.0 - p))
                .collect(),
        )?;

        let mut grads = vec![None; self.layers.len()];
        let mut d_skip: Vec<Option<Vec<Vector>>> = vec![None; depth];
        let mut d_x = vec![d_logits];
        let stages = self.stages();
        // activations are stored for every layer but the head
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let d_out = match stages[idx] {
                StageKind::Head => d_x.clone(),
                StageKind::Encoder(s) => {
                    let pooled_len = d_x[0].len();
                    let mut d_act = Vec::with_capacity(d_x.len());
                    for (c, d) in d_x.iter().enumerate() {
                        let mut full = unpool(d, &cache.pool_argmax[s][c], pooled_len * factor);
                        if let Some(skip) = &d_skip[s] {
                            full.iter_mut().zip(skip[c].iter()).for_each(|(a, b)| *a += b);
                        }
                        d_act.push(full);
                    }
                    tanh_adjoint(&cache.activations[idx], d_act)?
                }
                _ => tanh_adjoint(&cache.activations[idx], d_x.iter().map(|d| d.to_vec()).collect())?,
            };
            let g = layer.backward(&cache.layer_caches[idx], &d_out)?;
            d_x = g.d_input;
            if let StageKind::Decoder(j) = stages[idx] {
                let up_channels = layer.shape().in_channels
                    - if self.config.skip_connections {
                        self.config.encoder_channels[depth - 1 - j]
                    } else {
                        0
                    };
                let skip_part = d_x.split_off(up_channels);
                if self.config.skip_connections {
                    d_skip[depth - 1 - j] = Some(skip_part);
                }
                d_x = d_x.iter().map(|d| downsample_sum(d, factor)).collect::<Result<_>>()?;
            }
            grads[idx] = Some(ParamGradients {
                weights: g.d_weights,
                biases: g.d_biases,
            });
        }
        Ok(ModelGradients {
            layers: grads.into_iter().map(|g| g.expect("every layer visited")).collect(),
        })
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn tanh(x: &Vector) -> Result<Vector> {
    Vector::new(x.iter().map(|v| v.tanh()).collect())
}

fn tanh_adjoint(act: &[Vector], upstream: Vec<Vec<f64>>) -> Result<Vec<Vector>> {
    act.iter()
        .zip(upstream)
        .map(|(a, mut d)| {
            d.iter_mut().zip(a.iter()).for_each(|(d, a)| *d *= 1.0 - a * a);
            Vector::new(d)
        })
        .collect()
}

/// Non-overlapping max pooling. Ties resolve to the first index.
fn maxpool(x: &Vector, factor: usize) -> Result<(Vector, Vec<usize>)> {
    let mut out = Vec::with_capacity(x.len() / factor);
    let mut argmax = Vec::with_capacity(x.len() / factor);
    for (w, window) in x.chunks_exact(factor).enumerate() {
        let mut best = 0;
        for (j, &v) in window.iter().enumerate() {
            if v > window[best] {
                best = j;
            }
        }
        out.push(window[best]);
        argmax.push(w * factor + best);
    }
    Ok((Vector::new(out)?, argmax))
}

fn unpool(d: &Vector, argmax: &[usize], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (&g, &idx) in d.iter().zip(argmax) {
        out[idx] += g;
    }
    out
}

/// Nearest-neighbour upsampling.
fn upsample(x: &Vector, factor: usize) -> Result<Vector> {
    Vector::new(x.iter().flat_map(|&v| std::iter::repeat_n(v, factor)).collect())
}

fn downsample_sum(d: &Vector, factor: usize) -> Result<Vector> {
    Vector::new(d.chunks_exact(factor).map(|c| c.iter().sum()).collect())
}
