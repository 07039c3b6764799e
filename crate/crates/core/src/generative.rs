//! Generative-neuron layer: every connection applies a learnable Q-term
//! power series to each input tap before summation pooling.
//!
//! Weights are stored as `[k][i][r][q]` (out-channel, in-channel, tap, power)
//! where slot `q` holds the coefficient of `y^(q+1)`. The vectorized path
//! flattens each `(k, i)` kernel power-major (`[q][r]`) so it lines up with
//! the columns of `[Y | Y∘2 | … | Y∘Q]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Vector};

/// Hyperparameters that fix the storage layout of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_width: usize,
    pub order: usize,
}

impl LayerShape {
    pub fn new(in_channels: usize, out_channels: usize, kernel_width: usize, order: usize) -> Result<Self> {
        let shape = Self {
            in_channels,
            out_channels,
            kernel_width,
            order,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid("channel counts must be at least 1"));
        }
        if self.kernel_width == 0 || self.kernel_width.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "kernel width must be odd, got {}",
                self.kernel_width
            )));
        }
        if self.order == 0 {
            return Err(Error::invalid("Taylor order must be at least 1"));
        }
        Ok(())
    }

    /// Coefficients per `(k, i)` connection.
    pub fn kernel_len(&self) -> usize {
        self.kernel_width * self.order
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_len()
    }

    /// Trainable scalars including one bias per output channel.
    pub fn param_count(&self) -> usize {
        self.out_channels * (self.in_channels * self.kernel_len() + 1)
    }

    /// Multiply-accumulates for an output length of `len`. Bias additions and
    /// the power computations are not counted.
    pub fn mac_count(&self, len: usize) -> u64 {
        (self.out_channels * self.in_channels) as u64 * len as u64 * self.kernel_len() as u64
    }

    #[inline]
    pub fn index(&self, k: usize, i: usize, r: usize, q: usize) -> usize {
        ((k * self.in_channels + i) * self.kernel_width + r) * self.order + q
    }
}

/// Learnable state of one generative layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeLayer {
    shape: LayerShape,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

/// Values retained by [`GenerativeLayer::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub shape: LayerShape,
    /// `[Y_i | Y_i∘2 | … | Y_i∘Q]` of every input channel side by side,
    /// `M × in·KQ`.
    pub yq: Matrix,
    /// Per output channel, bias included.
    pub pre_activation: Vec<Vector>,
    pub input: Vec<Vector>,
}

/// Gradients of a scalar loss with respect to a layer's parameters and inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    /// Same `[k][i][r][q]` layout as the layer weights.
    pub d_weights: Vec<f64>,
    pub d_biases: Vec<f64>,
    pub d_input: Vec<Vector>,
}

impl GenerativeLayer {
    pub fn new(shape: LayerShape, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if weights.len() != shape.weight_count() {
            return Err(Error::invalid(format!(
                "expected {} weights, got {}",
                shape.weight_count(),
                weights.len()
            )));
        }
        if biases.len() != shape.out_channels {
            return Err(Error::invalid(format!(
                "expected {} biases, got {}",
                shape.out_channels,
                biases.len()
            )));
        }
        if weights.iter().chain(&biases).any(|w| !w.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        Ok(Self { shape, weights, biases })
    }

    pub fn zeros(shape: LayerShape) -> Result<Self> {
        Self::new(shape, vec![0.0; shape.weight_count()], vec![0.0; shape.out_channels])
    }

    /// Uniform fan-in/fan-out initialization with the power-`q` coefficients
    /// damped by `1/q!`. Biases start at zero.
    pub fn init(shape: LayerShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = init_bound(&shape);
        let mut weights = vec![0.0; shape.weight_count()];
        for (idx, w) in weights.iter_mut().enumerate() {
            let q = idx % shape.order;
            *w = rng.random_range(-bound..=bound) / factorial(q + 1);
        }
        Self::new(shape, weights, vec![0.0; shape.out_channels])
    }

    pub fn shape(&self) -> LayerShape {
        self.shape
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    pub fn weight(&self, k: usize, i: usize, r: usize, q: usize) -> f64 {
        self.weights[self.shape.index(k, i, r, q)]
    }

    pub fn count_params(&self) -> usize {
        self.shape.param_count()
    }

    pub fn count_macs(&self, len: usize) -> u64 {
        self.shape.mac_count(len)
    }

    /// Kernel of connection `i → k` flattened power-major: all taps of power
    /// 1, then all taps of power 2, and so on.
    pub fn flat_kernel(&self, k: usize, i: usize) -> Vec<f64> {
        let LayerShape {
            kernel_width: kw,
            order,
            ..
        } = self.shape;
        let base = self.shape.index(k, i, 0, 0);
        let block = &self.weights[base..base + kw * order];
        let mut flat = vec![0.0; kw * order];
        for r in 0..kw {
            for q in 0..order {
                flat[q * kw + r] = block[r * order + q];
            }
        }
        flat
    }

    fn check_inputs(&self, inputs: &[Vector]) -> Result<usize> {
        if inputs.len() != self.shape.in_channels {
            return Err(Error::invalid(format!(
                "layer expects {} input channels, got {}",
                self.shape.in_channels,
                inputs.len()
            )));
        }
        let len = inputs[0].len();
        if let Some(bad) = inputs.iter().find(|y| y.len() != len) {
            return Err(Error::invalid(format!(
                "input channels differ in length ({len} vs {})",
                bad.len()
            )));
        }
        if self.shape.kernel_width > len + 2 * (self.shape.kernel_width / 2) {
            return Err(Error::invalid("input shorter than kernel support"));
        }
        Ok(len)
    }

    /// Reference forward pass evaluated term by term with explicit loops.
    pub fn forward_naive(&self, inputs: &[Vector]) -> Result<Vec<Vector>> {
        self.forward_naive_counted(inputs).map(|(out, _)| out)
    }

    /// [`forward_naive`](Self::forward_naive) that also returns the number of
    /// weight-times-power multiplications it performed.
    pub fn forward_naive_counted(&self, inputs: &[Vector]) -> Result<(Vec<Vector>, u64)> {
        let len = self.check_inputs(inputs)?;
        let LayerShape {
            in_channels,
            out_channels,
            kernel_width: kw,
            order,
        } = self.shape;
        let half = kw / 2;
        let mut macs = 0u64;
        let mut outputs = Vec::with_capacity(out_channels);
        for k in 0..out_channels {
            let mut out = vec![self.biases[k]; len];
            for (m, o) in out.iter_mut().enumerate() {
                for (i, y) in inputs.iter().enumerate().take(in_channels) {
                    for r in 0..kw {
                        let pos = (m + r).wrapping_sub(half);
                        let tap = if pos < len { y[pos] } else { 0.0 };
                        for q in 0..order {
                            *o += self.weight(k, i, r, q) * tap.powi(q as i32 + 1);
                            macs += 1;
                        }
                    }
                }
            }
            outputs.push(Vector::new(out)?);
        }
        Ok((outputs, macs))
    }

    /// Forward pass as a sum of `Q` ordinary convolutions, one per power of
    /// the input.
    pub fn forward_by_convolutions(&self, inputs: &[Vector]) -> Result<Vec<Vector>> {
        let len = self.check_inputs(inputs)?;
        let LayerShape {
            out_channels,
            kernel_width: kw,
            order,
            ..
        } = self.shape;
        let half = kw / 2;
        let mut outputs: Vec<Vec<f64>> = self.biases.iter().map(|&b| vec![b; len]).collect();
        let mut power: Vec<Vec<f64>> = inputs.iter().map(|y| y.to_vec()).collect();
        for q in 0..order {
            if q > 0 {
                for (p, y) in power.iter_mut().zip(inputs) {
                    p.iter_mut().zip(y.iter()).for_each(|(p, y)| *p *= y);
                }
            }
            for (k, out) in outputs.iter_mut().enumerate().take(out_channels) {
                for (i, p) in power.iter().enumerate() {
                    for r in 0..kw {
                        let w = self.weight(k, i, r, q);
                        // out(m) += w · p(m + r − half) over the valid range of m
                        let lo = half.saturating_sub(r);
                        let hi = (len + half).saturating_sub(r).min(len);
                        for m in lo..hi {
                            out[m] += w * p[m + r - half];
                        }
                    }
                }
            }
        }
        outputs.into_iter().map(Vector::new).collect()
    }

    /// Weights as an `(in·KQ) × out` row-major matrix whose row
    /// `i·KQ + q·K + r` holds the coefficient of tap `r`, power `q + 1`, of
    /// input channel `i` for every output channel.
    fn weight_matrix(&self) -> Vec<f64> {
        let LayerShape {
            in_channels,
            out_channels,
            kernel_width: kw,
            order,
        } = self.shape;
        let kq = kw * order;
        let mut w = vec![0.0; in_channels * kq * out_channels];
        for k in 0..out_channels {
            for i in 0..in_channels {
                for (j, v) in self.flat_kernel(k, i).into_iter().enumerate() {
                    w[(i * kq + j) * out_channels + k] = v;
                }
            }
        }
        w
    }

    /// Vectorized forward pass. The power-expanded im2row matrices of all
    /// input channels sit side by side in one `M × in·KQ` matrix, and a
    /// single matrix product with the weight matrix yields every output
    /// channel.
    pub fn forward(&self, inputs: &[Vector]) -> Result<(Vec<Vector>, ForwardCache)> {
        let len = self.check_inputs(inputs)?;
        let LayerShape {
            in_channels,
            out_channels,
            kernel_width: kw,
            order,
        } = self.shape;
        let kq = kw * order;
        let width = in_channels * kq;
        let half = kw / 2;
        // same content as im2row followed by hadamard_power_concat, written
        // straight into the shared matrix
        let mut yq = vec![0.0; len * width];
        for (i, y) in inputs.iter().enumerate() {
            let mut padded = vec![0.0; len + 2 * half];
            padded[half..half + len].copy_from_slice(y);
            for (m, row) in yq.chunks_exact_mut(width).enumerate() {
                let block = &mut row[i * kq..(i + 1) * kq];
                for (r, &v) in padded[m..m + kw].iter().enumerate() {
                    let mut p = v;
                    for q in 0..order {
                        block[q * kw + r] = p;
                        p *= v;
                    }
                }
            }
        }
        let w = self.weight_matrix();
        // channel-major output: element (m, k) lives at k·M + m
        let mut out: Vec<f64> = self.biases.iter().flat_map(|&b| std::iter::repeat_n(b, len)).collect();
        gemm(
            (len, width, out_channels),
            (&yq, width, 1),
            (&w, out_channels, 1),
            (&mut out, 1, len),
        );
        let outputs = out
            .chunks_exact(len)
            .map(|c| Vector::new(c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let cache = ForwardCache {
            shape: self.shape,
            yq: Matrix::new(len, width, yq)?,
            pre_activation: outputs.clone(),
            input: inputs.to_vec(),
        };
        Ok((outputs, cache))
    }

    /// Back-propagates `d_output` (loss gradient w.r.t. each output channel)
    /// through the layer using the cache from [`forward`](Self::forward).
    pub fn backward(&self, cache: &ForwardCache, d_output: &[Vector]) -> Result<LayerGradients> {
        let shape = self.shape;
        let LayerShape {
            in_channels,
            out_channels,
            kernel_width: kw,
            order,
        } = shape;
        let kq = kw * order;
        let width = in_channels * kq;
        if cache.shape != shape || cache.yq.cols() != width {
            return Err(Error::InvalidState(
                "forward cache was produced by a layer of a different shape".into(),
            ));
        }
        let rows = cache.yq.rows();
        if d_output.len() != out_channels || d_output.iter().any(|d| d.len() != rows) {
            return Err(Error::invalid(format!(
                "output gradient must be {out_channels} channels of length {rows}"
            )));
        }

        let d_biases: Vec<f64> = d_output.iter().map(|d| d.iter().sum()).collect();
        let d_out: Vec<f64> = d_output.iter().flat_map(|d| d.iter().copied()).collect();
        let yq = cache.yq.as_slice();

        // dW = Y^(Q)ᵀ · dOut, an (in·KQ) × out matrix
        let mut d_w = vec![0.0; width * out_channels];
        gemm(
            (width, rows, out_channels),
            (yq, 1, width),
            (&d_out, 1, rows),
            (&mut d_w, out_channels, 1),
        );
        let mut d_weights = vec![0.0; shape.weight_count()];
        for k in 0..out_channels {
            for i in 0..in_channels {
                for q in 0..order {
                    for r in 0..kw {
                        d_weights[shape.index(k, i, r, q)] = d_w[(i * kq + q * kw + r) * out_channels + k];
                    }
                }
            }
        }

        // G = dOut · Wᵀ, the gradient with respect to Y^(Q)
        let w = self.weight_matrix();
        let mut g = vec![0.0; rows * width];
        gemm(
            (rows, out_channels, width),
            (&d_out, 1, rows),
            (&w, 1, out_channels),
            (&mut g, width, 1),
        );

        let half = kw / 2;
        let mut d_input = Vec::with_capacity(in_channels);
        for i in 0..in_channels {
            // chain through the powers (d/dY of Y∘(q+1) is (q+1)·Y∘q), then
            // scatter each tap back to its input sample
            let mut d_padded = vec![0.0; rows + 2 * half];
            for m in 0..rows {
                let base = &yq[m * width + i * kq..][..kw];
                let g_row = &g[m * width + i * kq..][..kq];
                for (r, &y) in base.iter().enumerate() {
                    let mut power = 1.0;
                    let mut acc = 0.0;
                    for q in 0..order {
                        acc += (q + 1) as f64 * power * g_row[q * kw + r];
                        power *= y;
                    }
                    d_padded[m + r] += acc;
                }
            }
            d_input.push(Vector::new(d_padded[half..half + rows].to_vec())?);
        }
        Ok(LayerGradients {
            d_weights,
            d_biases,
            d_input,
        })
    }
}

/// `C += A·B` for an `m × k` by `k × n` product; each operand is given as
/// (data, row stride, column stride).
fn gemm(
    (m, k, n): (usize, usize, usize),
    a: (&[f64], usize, usize),
    b: (&[f64], usize, usize),
    c: (&mut [f64], usize, usize),
) {
    let fits = |len: usize, rows: usize, cols: usize, rs: usize, cs: usize| {
        rows == 0 || cols == 0 || (rows - 1) * rs + (cols - 1) * cs < len
    };
    assert!(fits(a.0.len(), m, k, a.1, a.2) && fits(b.0.len(), k, n, b.1, b.2) && fits(c.0.len(), m, n, c.1, c.2));
    // SAFETY: the strides address only elements inside the slices, whose
    // lengths are checked above, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            1.0,
            c.0.as_mut_ptr(),
            c.1 as isize,
            c.2 as isize,
        );
    }
}

fn init_bound(shape: &LayerShape) -> f64 {
    (6.0 / ((shape.in_channels + shape.out_channels) * shape.kernel_width) as f64).sqrt()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}
