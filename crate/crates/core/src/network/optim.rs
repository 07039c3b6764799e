use crate::error::{Error, Result};
use crate::network::{Layer, Model, ModelGradients};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer hyperparameters and running state. Moment buffers are flat and
/// follow the model's parameter order (per layer: weights, then biases).
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptimizerState {
    /// Plain gradient descent: `w ← w − lr · dL/dw`.
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            beta1: 0.0,
            beta2: 0.0,
            eps_hat: 0.0,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn adam<L: Layer>(lr: f64, model: &Model<L>) -> Self {
        let n = model.param_len();
        Self {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step<L: Layer>(&mut self, model: &mut Model<L>, grads: &ModelGradients) -> Result<()> {
        let n = model.param_len();
        let shapes_match = grads.layers.len() == model.layers().len()
            && grads
                .layers
                .iter()
                .zip(model.layers())
                .all(|(g, l)| g.weights.len() == l.weights().len() && g.biases.len() == l.biases().len());
        if !shapes_match {
            return Err(Error::invalid("gradient shapes do not mirror the model parameters"));
        }
        if self.kind == OptimizerKind::Adam && (self.m.len() != n || self.v.len() != n) {
            return Err(Error::invalid(format!(
                "optimizer moments hold {} entries, model has {n} parameters",
                self.m.len()
            )));
        }
        let flat: Vec<f64> = grads.iter().collect();
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = self.lr;
                model.for_each_param_mut(|idx, w| *w -= lr * flat[idx]);
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (self.beta1, self.beta2);
                let c1 = 1.0 - b1.powf(self.t as f64);
                let c2 = 1.0 - b2.powf(self.t as f64);
                let (lr, eps) = (self.lr, self.eps_hat);
                let (m, v) = (&mut self.m, &mut self.v);
                model.for_each_param_mut(|idx, w| {
                    let g = flat[idx];
                    m[idx] = b1 * m[idx] + (1.0 - b1) * g;
                    v[idx] = b2 * v[idx] + (1.0 - b2) * g * g;
                    let m_hat = m[idx] / c1;
                    let v_hat = v[idx] / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
            }
        }
        Ok(())
    }
}
