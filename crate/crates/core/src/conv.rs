//! Plain 1D convolution layer written with direct loops, independent of the
//! im2row machinery. A network built from these layers is the
//! equal-configuration CNN baseline for a first-order generative network.

use crate::error::{Error, Result};
use crate::generative::{GenerativeLayer, LayerGradients, LayerShape};
use crate::network::Layer;
use crate::tensor::Vector;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    in_channels: usize,
    out_channels: usize,
    kernel_width: usize,
    /// `[k][i][r]`
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl ConvLayer {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_width: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
    ) -> Result<Self> {
        LayerShape::new(in_channels, out_channels, kernel_width, 1)?;
        if weights.len() != in_channels * out_channels * kernel_width || biases.len() != out_channels {
            return Err(Error::invalid("convolution parameter count mismatch"));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel_width,
            weights,
            biases,
        })
    }

    /// Copies a first-order generative layer; higher orders have no
    /// convolutional equivalent.
    pub fn from_generative(layer: &GenerativeLayer) -> Result<Self> {
        let s = layer.shape();
        if s.order != 1 {
            return Err(Error::invalid(format!(
                "only order-1 layers are convolutions (got order {})",
                s.order
            )));
        }
        Self::new(
            s.in_channels,
            s.out_channels,
            s.kernel_width,
            layer.weights().to_vec(),
            layer.biases().to_vec(),
        )
    }

    fn w(&self, k: usize, i: usize, r: usize) -> f64 {
        self.weights[(k * self.in_channels + i) * self.kernel_width + r]
    }

    /// `out_k(m) = b_k + Σ_i Σ_r w[k][i][r] · y_i(m + r − half)`, zero outside.
    pub fn forward(&self, inputs: &[Vector]) -> Result<Vec<Vector>> {
        if inputs.len() != self.in_channels {
            return Err(Error::invalid("input channel count mismatch"));
        }
        let len = inputs[0].len();
        if inputs.iter().any(|y| y.len() != len) {
            return Err(Error::invalid("input channels differ in length"));
        }
        let half = self.kernel_width / 2;
        (0..self.out_channels)
            .map(|k| {
                let mut out = vec![self.biases[k]; len];
                for (i, y) in inputs.iter().enumerate() {
                    for r in 0..self.kernel_width {
                        let w = self.w(k, i, r);
                        for (m, o) in out.iter_mut().enumerate() {
                            let src = m as isize + r as isize - half as isize;
                            if src >= 0 && (src as usize) < len {
                                *o += w * y[src as usize];
                            }
                        }
                    }
                }
                Vector::new(out)
            })
            .collect()
    }

    pub fn backward(&self, inputs: &[Vector], d_output: &[Vector]) -> Result<LayerGradients> {
        if inputs.len() != self.in_channels || d_output.len() != self.out_channels {
            return Err(Error::InvalidState("cached input does not match layer".into()));
        }
        let len = inputs[0].len();
        if d_output.iter().any(|d| d.len() != len) {
            return Err(Error::invalid("output gradient length mismatch"));
        }
        let half = self.kernel_width as isize / 2;
        let mut d_weights = vec![0.0; self.weights.len()];
        let mut d_input = vec![vec![0.0; len]; self.in_channels];
        for (k, d) in d_output.iter().enumerate() {
            for (i, y) in inputs.iter().enumerate() {
                for r in 0..self.kernel_width {
                    let w = self.w(k, i, r);
                    let mut acc = 0.0;
                    for m in 0..len {
                        let src = m as isize + r as isize - half;
                        if src >= 0 && (src as usize) < len {
                            acc += d[m] * y[src as usize];
                            d_input[i][src as usize] += d[m] * w;
                        }
                    }
                    d_weights[(k * self.in_channels + i) * self.kernel_width + r] = acc;
                }
            }
        }
        Ok(LayerGradients {
            d_weights,
            d_biases: d_output.iter().map(|d| d.iter().sum()).collect(),
            d_input: d_input.into_iter().map(Vector::new).collect::<Result<_>>()?,
        })
    }
}

impl Layer for ConvLayer {
    type Cache = Vec<Vector>;

    fn shape(&self) -> LayerShape {
        LayerShape {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel_width: self.kernel_width,
            order: 1,
        }
    }

    fn forward(&self, inputs: &[Vector]) -> Result<(Vec<Vector>, Self::Cache)> {
        Ok((ConvLayer::forward(self, inputs)?, inputs.to_vec()))
    }

    fn backward(&self, cache: &Self::Cache, d_output: &[Vector]) -> Result<LayerGradients> {
        ConvLayer::backward(self, cache, d_output)
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn biases(&self) -> &[f64] {
        &self.biases
    }

    fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }
}
