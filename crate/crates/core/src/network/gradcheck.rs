use crate::error::{Error, Result};
use crate::network::loss::CLAMP;
use crate::network::{bce_loss, maxpool, sigmoid, Layer, Model, StageKind};
use crate::tensor::Vector;

/// Deliberate corruption of the analytic gradient, used to confirm that the
/// checker can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultInjection {
    /// Scale every analytic weight gradient by 1.01.
    WeightGrad,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub h: f64,
    pub tol: f64,
    pub fault: Option<FaultInjection>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub params_checked: usize,
    pub max_rel_err: f64,
    /// Layer index, whether the entry is a bias, and its index in that
    /// layer's weight or bias storage.
    pub worst: (usize, bool, usize),
    /// Analytic and finite-difference values at `worst`.
    pub worst_values: (f64, f64),
    pub tol: f64,
    pub passed: bool,
}

/// Compares the analytic BCE gradient of every parameter against the central
/// difference `(L(w + h) − L(w − h)) / 2h`. Relative error is
/// `|a − fd| / max(|a|, |fd|, 1e-8)`.
///
/// `L(w ± h) − L(w)` is evaluated by pushing the exact increment of every
/// intermediate value through the graph (e.g. `tanh(z + d) − tanh(z)` via the
/// addition formula) instead of subtracting two rounded losses. Subtracting
/// losses near 0.7 leaves about 1e-11 of rounding noise in the quotient,
/// which swamps the small gradients of the high-order weights.
pub fn gradcheck<L: Layer>(
    model: &Model<L>,
    segment: &Vector,
    target: &Vector,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport> {
    let (pred, cache) = model.run(segment, true)?;
    let cache = cache.expect("cache requested");
    let (_, d_pred) = bce_loss(&pred, target)?;
    let mut analytic = model.backward(&cache, &d_pred)?;
    if opts.fault == Some(FaultInjection::WeightGrad) {
        for layer in &mut analytic.layers {
            layer.weights.iter_mut().for_each(|g| *g *= 1.01);
        }
    }

    let trace = Trace::record(model, segment)?;
    let mut max_rel_err = 0.0;
    let mut worst = (0, false, 0);
    let mut worst_values = (0.0, 0.0);
    let mut checked = 0;
    for (l, grads) in analytic.layers.iter().enumerate() {
        for (is_bias, values) in [(false, &grads.weights), (true, &grads.biases)] {
            for (j, &a) in values.iter().enumerate() {
                let param = Param {
                    layer: l,
                    is_bias,
                    index: j,
                };
                let up = trace.loss_increment(model, target, param, opts.h)?;
                let down = trace.loss_increment(model, target, param, -opts.h)?;
                let fd = (up - down) / (2.0 * opts.h);
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
                if rel > max_rel_err || checked == 0 {
                    max_rel_err = rel;
                    worst = (l, is_bias, j);
                    worst_values = (a, fd);
                }
                checked += 1;
            }
        }
    }
    Ok(GradcheckReport {
        params_checked: checked,
        max_rel_err,
        worst,
        worst_values,
        tol: opts.tol,
        passed: max_rel_err <= opts.tol,
    })
}

#[derive(Debug, Clone, Copy)]
struct Param {
    layer: usize,
    is_bias: bool,
    index: usize,
}

type Channels = Vec<Vec<f64>>;
/// Per-channel increments; `None` means the channel is unchanged.
type Deltas = Vec<Option<Vec<f64>>>;

/// Unperturbed values at every point of the graph.
struct Trace {
    inputs: Vec<Channels>,
    outputs: Vec<Channels>,
    activations: Vec<Channels>,
    argmax: Vec<Vec<Vec<usize>>>,
    prediction: Vec<f64>,
}

impl Trace {
    fn record<L: Layer>(model: &Model<L>, segment: &Vector) -> Result<Self> {
        model.check_segment(segment)?;
        let config = model.config();
        let factor = config.pool_factor;
        let mut trace = Trace {
            inputs: vec![],
            outputs: vec![],
            activations: vec![],
            argmax: vec![],
            prediction: vec![],
        };
        let mut skips: Vec<Channels> = vec![];
        let mut x: Channels = vec![segment.to_vec()];
        for (layer, stage) in model.layers().iter().zip(model.stages()) {
            if let StageKind::Decoder(j) = stage {
                x = x.iter().map(|c| upsample(c, factor)).collect();
                if config.skip_connections {
                    x.extend(skips[config.depth() - 1 - j].iter().cloned());
                }
            }
            let vx = x.iter().map(|c| Vector::new(c.clone())).collect::<Result<Vec<_>>>()?;
            let (out, _) = layer.forward(&vx)?;
            let out: Channels = out.iter().map(|v| v.to_vec()).collect();
            trace.inputs.push(std::mem::take(&mut x));
            if let StageKind::Head = stage {
                trace.prediction = out[0].iter().map(|&z| sigmoid(z)).collect();
                trace.outputs.push(out);
                trace.activations.push(vec![]);
                break;
            }
            let act: Channels = out.iter().map(|c| c.iter().map(|v| v.tanh()).collect()).collect();
            x = act.clone();
            if let StageKind::Encoder(_) = stage {
                let mut pooled = vec![];
                let mut argmax = vec![];
                for a in &act {
                    let (p, idx) = maxpool(&Vector::new(a.clone())?, factor)?;
                    pooled.push(p.to_vec());
                    argmax.push(idx);
                }
                skips.push(act.clone());
                trace.argmax.push(argmax);
                x = pooled;
            }
            trace.outputs.push(out);
            trace.activations.push(act);
        }
        Ok(trace)
    }

    /// `L(w + delta·e_param) − L(w)`.
    fn loss_increment<L: Layer>(&self, model: &Model<L>, target: &Vector, param: Param, delta: f64) -> Result<f64> {
        let config = model.config();
        let factor = config.pool_factor;
        let depth = config.depth();
        let stages = model.stages();
        let mut d_skips: Vec<Deltas> = config.encoder_channels.iter().map(|&c| vec![None; c]).collect();
        let skip_channels = |j: usize| {
            if config.skip_connections {
                config.encoder_channels[depth - 1 - j]
            } else {
                0
            }
        };
        let mut dx: Deltas = match stages[param.layer] {
            StageKind::Decoder(j) => vec![None; self.inputs[param.layer].len() - skip_channels(j)],
            _ => vec![None; self.inputs[param.layer].len()],
        };

        for (idx, &stage) in stages.iter().enumerate().skip(param.layer) {
            if let StageKind::Decoder(j) = stage {
                dx = dx.iter().map(|d| d.as_ref().map(|d| upsample(d, factor))).collect();
                if config.skip_connections {
                    dx.extend(d_skips[depth - 1 - j].iter().cloned());
                }
            }
            let perturb = (idx == param.layer).then_some((param, delta));
            let dz = layer_increment(&model.layers()[idx], &self.inputs[idx], &dx, perturb);
            if let StageKind::Head = stage {
                return bce_increment(&self.outputs[idx][0], &self.prediction, dz[0].as_deref(), target);
            }
            let act = &self.activations[idx];
            let dt: Deltas = dz
                .iter()
                .zip(act)
                .map(|(d, t)| {
                    d.as_ref()
                        .map(|d| d.iter().zip(t).map(|(&d, &t)| tanh_increment(t, d)).collect())
                })
                .collect();
            dx = match stage {
                StageKind::Encoder(s) => {
                    let pooled = dt
                        .iter()
                        .zip(act)
                        .zip(&self.argmax[s])
                        .map(|((d, a), am)| d.as_ref().map(|d| maxpool_increment(a, d, am, factor)))
                        .collect();
                    d_skips[s] = dt;
                    pooled
                }
                _ => dt,
            };
        }
        Err(Error::InvalidState("model has no head layer".into()))
    }
}

fn upsample(x: &[f64], factor: usize) -> Vec<f64> {
    x.iter().flat_map(|&v| std::iter::repeat_n(v, factor)).collect()
}

/// `tanh(z + d) − tanh(z)` from `t = tanh(z)`.
fn tanh_increment(t: f64, d: f64) -> f64 {
    let td = d.tanh();
    td * (1.0 - t * t) / (1.0 + t * td)
}

fn maxpool_increment(base: &[f64], delta: &[f64], argmax: &[usize], factor: usize) -> Vec<f64> {
    argmax
        .iter()
        .enumerate()
        .map(|(w, &old)| {
            let start = w * factor;
            let mut best = start;
            for j in start..start + factor {
                if base[j] + delta[j] > base[best] + delta[best] {
                    best = j;
                }
            }
            if best == old {
                delta[old]
            } else {
                (base[best] - base[old]) + delta[best]
            }
        })
        .collect()
}

/// Output increments of one layer given input increments, plus an optional
/// perturbation of one of its own parameters.
fn layer_increment<L: Layer>(layer: &L, inputs: &Channels, dx: &Deltas, perturb: Option<(Param, f64)>) -> Deltas {
    let shape = layer.shape();
    let (kw, q_order) = (shape.kernel_width, shape.order);
    let pad = (kw - 1) / 2;
    let len = inputs[0].len();
    let padded = len + 2 * pad;
    let kq = kw * q_order;
    let weights = layer.weights();
    let mut dz: Deltas = vec![None; shape.out_channels];

    for (i, d) in dx.iter().enumerate() {
        let Some(d) = d else { continue };
        // powers[p·Q + q] = (a + e)^(q+1) − a^(q+1) at padded position p
        let mut powers = vec![0.0; padded * q_order];
        for m in 0..len {
            let (a, e) = (inputs[i][m], d[m]);
            let b = a + e;
            let slot = &mut powers[(m + pad) * q_order..(m + pad + 1) * q_order];
            let (mut prev, mut a_pow) = (e, a);
            slot[0] = e;
            for s in slot.iter_mut().skip(1) {
                prev = b * prev + e * a_pow;
                a_pow *= a;
                *s = prev;
            }
        }
        for (k, out) in dz.iter_mut().enumerate() {
            let w = &weights[(k * shape.in_channels + i) * kq..][..kq];
            let out = out.get_or_insert_with(|| vec![0.0; len]);
            for (m, o) in out.iter_mut().enumerate() {
                let window = &powers[m * q_order..m * q_order + kq];
                *o += w.iter().zip(window).map(|(w, p)| w * p).sum::<f64>();
            }
        }
    }

    if let Some((param, delta)) = perturb {
        if param.is_bias {
            let out = dz[param.index].get_or_insert_with(|| vec![0.0; len]);
            out.iter_mut().for_each(|o| *o += delta);
        } else {
            let j = param.index;
            let q = j % q_order;
            let r = (j / q_order) % kw;
            let i = (j / kq) % shape.in_channels;
            let k = j / (kq * shape.in_channels);
            let out = dz[k].get_or_insert_with(|| vec![0.0; len]);
            for (m, o) in out.iter_mut().enumerate() {
                // the perturbed layer sees unchanged inputs
                if let Some(&y) = (m + r).checked_sub(pad).and_then(|p| inputs[i].get(p)) {
                    *o += delta * y.powi(q as i32 + 1);
                }
            }
        }
    }
    dz
}

/// Mean BCE increment when the logits move by `dz`.
fn bce_increment(logits: &[f64], prediction: &[f64], dz: Option<&[f64]>, target: &Vector) -> Result<f64> {
    let Some(dz) = dz else { return Ok(0.0) };
    let inside = |p: f64| (CLAMP..=1.0 - CLAMP).contains(&p);
    let loss = |p: f64, t: f64| {
        let p = p.clamp(CLAMP, 1.0 - CLAMP);
        -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
    };
    let mut total = 0.0;
    for (((&z, &p), &d), &t) in logits.iter().zip(prediction).zip(dz).zip(target.iter()) {
        let p1 = sigmoid(z + d);
        total += if inside(p) && inside(p1) {
            // per-sample loss is softplus(z) − t·z
            (p * d.exp_m1()).ln_1p() - t * d
        } else {
            loss(p1, t) - loss(p, t)
        };
    }
    Ok(total / logits.len() as f64)
}
