use crate::error::{Error, Result};
use crate::tensor::Vector;

pub(super) const CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy and its gradient with respect to `prediction`.
///
/// Predictions are clamped to `[1e-7, 1 − 1e-7]` before both the loss and
/// the gradient are evaluated.
pub fn bce_loss(prediction: &Vector, target: &Vector) -> Result<(f64, Vector)> {
    if prediction.len() != target.len() {
        return Err(Error::invalid(format!(
            "prediction has {} samples, target has {}",
            prediction.len(),
            target.len()
        )));
    }
    let n = prediction.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(prediction.len());
    for (&p, &t) in prediction.iter().zip(target.iter()) {
        let p = p.clamp(CLAMP, 1.0 - CLAMP);
        loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        grad.push((p - t) / (p * (1.0 - p) * n));
    }
    Ok((loss / n, Vector::new(grad)?))
}
