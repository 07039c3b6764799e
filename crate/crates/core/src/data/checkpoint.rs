//! Binary model checkpoints (little-endian):
//!
//! ```text
//! magic "SONN1CKPT" | version u16 | sample_rate u32
//! config: field count u8, then per field: tag u8 | payload len u32 | payload
//! layer count u32
//! per layer: in u32 | out u32 | K u32 | Q u32 | weights f32… ([k][i][r][q]) | biases f32…
//! optimizer flag u8; when 1: kind u8 | lr, beta1, beta2, eps f64 | t u64 | n u64 | m f64×n | v f64×n
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::generative::{GenerativeLayer, LayerShape};
use crate::network::{Layer, Model, NetworkConfig, OptimizerKind, OptimizerState};

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"SONN1CKPT";
pub const CHECKPOINT_VERSION: u16 = 1;

const TAG_Q_ORDER: u8 = 1;
const TAG_KERNEL_WIDTH: u8 = 2;
const TAG_ENCODER: u8 = 3;
const TAG_BOTTLENECK: u8 = 4;
const TAG_DECODER: u8 = 5;
const TAG_OUTPUT: u8 = 6;
const TAG_POOL: u8 = 7;
const TAG_SKIP: u8 = 8;
const FIELD_COUNT: u8 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub sample_rate_hz: u32,
    pub optimizer: Option<OptimizerState>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_list(out: &mut Vec<u8>, tag: u8, values: &[usize]) {
    out.push(tag);
    put_u32(out, 4 + 4 * values.len());
    put_u32(out, values.len());
    values.iter().for_each(|&v| put_u32(out, v));
}

fn put_scalar(out: &mut Vec<u8>, tag: u8, v: usize) {
    out.push(tag);
    put_u32(out, 4);
    put_u32(out, v);
}

pub fn encode_checkpoint(model: &Model, sample_rate_hz: u32, optimizer: Option<&OptimizerState>) -> Vec<u8> {
    let c = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&sample_rate_hz.to_le_bytes());

    out.push(FIELD_COUNT);
    put_scalar(&mut out, TAG_Q_ORDER, c.q_order);
    put_scalar(&mut out, TAG_KERNEL_WIDTH, c.kernel_width);
    put_list(&mut out, TAG_ENCODER, &c.encoder_channels);
    put_scalar(&mut out, TAG_BOTTLENECK, c.bottleneck_channels);
    put_list(&mut out, TAG_DECODER, &c.decoder_channels);
    put_scalar(&mut out, TAG_OUTPUT, c.output_channels);
    put_scalar(&mut out, TAG_POOL, c.pool_factor);
    out.push(TAG_SKIP);
    put_u32(&mut out, 1);
    out.push(u8::from(c.skip_connections));

    put_u32(&mut out, model.layers().len());
    for layer in model.layers() {
        let s = layer.shape();
        for v in [s.in_channels, s.out_channels, s.kernel_width, s.order] {
            put_u32(&mut out, v);
        }
        for &w in Layer::weights(layer).iter().chain(Layer::biases(layer)) {
            out.extend_from_slice(&(w as f32).to_le_bytes());
        }
    }

    match optimizer {
        None => out.push(0),
        Some(opt) => {
            out.push(1);
            out.push(match opt.kind {
                OptimizerKind::Sgd => 0,
                OptimizerKind::Adam => 1,
            });
            for v in [opt.lr, opt.beta1, opt.beta2, opt.eps_hat] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&opt.t.to_le_bytes());
            out.extend_from_slice(&(opt.m.len() as u64).to_le_bytes());
            for &v in opt.m.iter().chain(&opt.v) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!(
                    "truncated while reading {what}: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let at = self.pos;
        let v = f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(Error::format(at as u64, format!("{what} is not finite")));
        }
        Ok(v)
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let start = self.pos;
        let raw = self.take(n.saturating_mul(4), what)?;
        raw.chunks_exact(4)
            .enumerate()
            .map(|(j, c)| {
                let v = f32::from_le_bytes(c.try_into().expect("4 bytes"));
                if v.is_finite() {
                    Ok(v as f64)
                } else {
                    Err(Error::format(
                        (start + 4 * j) as u64,
                        format!("{what} holds a non-finite value"),
                    ))
                }
            })
            .collect()
    }
}

fn decode_config(cur: &mut Cursor) -> Result<NetworkConfig> {
    let at = cur.pos;
    let count = cur.u8("config field count")?;
    if count != FIELD_COUNT {
        return Err(Error::format(
            at as u64,
            format!("expected {FIELD_COUNT} config fields, found {count}"),
        ));
    }
    let mut fields: [Option<Vec<usize>>; FIELD_COUNT as usize] = Default::default();
    for _ in 0..count {
        let at = cur.pos;
        let tag = cur.u8("config tag")?;
        let len = cur.u32("config field length")?;
        let slot = match tag {
            1..=FIELD_COUNT => &mut fields[tag as usize - 1],
            _ => return Err(Error::format(at as u64, format!("unknown config tag {tag}"))),
        };
        if slot.is_some() {
            return Err(Error::format(at as u64, format!("config tag {tag} repeated")));
        }
        let values = match tag {
            TAG_SKIP => {
                if len != 1 {
                    return Err(Error::format(at as u64, "skip flag must be one byte"));
                }
                match cur.u8("skip flag")? {
                    b @ (0 | 1) => vec![b as usize],
                    b => {
                        return Err(Error::format(
                            (cur.pos - 1) as u64,
                            format!("skip flag {b} is not 0 or 1"),
                        ))
                    }
                }
            }
            TAG_ENCODER | TAG_DECODER => {
                let n = cur.u32("channel list length")?;
                if len != 4 + 4 * n {
                    return Err(Error::format(
                        at as u64,
                        format!("channel list of {n} entries in {len} bytes"),
                    ));
                }
                (0..n).map(|_| cur.u32("channel count")).collect::<Result<_>>()?
            }
            _ => {
                if len != 4 {
                    return Err(Error::format(at as u64, format!("config tag {tag} must hold 4 bytes")));
                }
                vec![cur.u32("config value")?]
            }
        };
        *slot = Some(values);
    }
    let mut take = |tag: u8| fields[tag as usize - 1].take().expect("all tags present");
    let config = NetworkConfig {
        q_order: take(TAG_Q_ORDER)[0],
        kernel_width: take(TAG_KERNEL_WIDTH)[0],
        encoder_channels: take(TAG_ENCODER),
        bottleneck_channels: take(TAG_BOTTLENECK)[0],
        decoder_channels: take(TAG_DECODER),
        output_channels: take(TAG_OUTPUT)[0],
        pool_factor: take(TAG_POOL)[0],
        skip_connections: take(TAG_SKIP)[0] == 1,
    };
    config
        .validate()
        .map_err(|e| Error::format(at as u64, format!("stored network config is invalid: {e}")))?;
    Ok(config)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(CHECKPOINT_MAGIC.len(), "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::format(0, "bad magic, not a checkpoint"));
    }
    let version = u16::from_le_bytes(cur.take(2, "version")?.try_into().expect("2 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(9, format!("unsupported checkpoint version {version}")));
    }
    let sample_rate_hz = cur.u32("sample rate")? as u32;
    if sample_rate_hz == 0 {
        return Err(Error::format(11, "sample rate is zero"));
    }
    let config = decode_config(&mut cur)?;
    let shapes = config.layer_shapes()?;

    let at = cur.pos;
    let n_layers = cur.u32("layer count")?;
    if n_layers != shapes.len() {
        return Err(Error::format(
            at as u64,
            format!("config describes {} layers, checkpoint stores {n_layers}", shapes.len()),
        ));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for (idx, expected) in shapes.iter().enumerate() {
        let at = cur.pos;
        let dims = [
            cur.u32("layer shape")?,
            cur.u32("layer shape")?,
            cur.u32("layer shape")?,
            cur.u32("layer shape")?,
        ];
        let stored = LayerShape {
            in_channels: dims[0],
            out_channels: dims[1],
            kernel_width: dims[2],
            order: dims[3],
        };
        if stored != *expected {
            return Err(Error::format(
                at as u64,
                format!(
                    "layer {idx}: stored shape (in {}, out {}, K {}, Q {}) does not match config (in {}, out {}, K {}, Q {})",
                    stored.in_channels,
                    stored.out_channels,
                    stored.kernel_width,
                    stored.order,
                    expected.in_channels,
                    expected.out_channels,
                    expected.kernel_width,
                    expected.order
                ),
            ));
        }
        let weights = cur.f32s(expected.weight_count(), "layer weights")?;
        let biases = cur.f32s(expected.out_channels, "layer biases")?;
        layers.push(GenerativeLayer::new(*expected, weights, biases)?);
    }
    let model = Model::from_layers(config, layers)?;

    let at = cur.pos;
    let optimizer = match cur.u8("optimizer flag")? {
        0 => None,
        1 => Some(decode_optimizer(&mut cur, model.param_len())?),
        f => return Err(Error::format(at as u64, format!("optimizer flag {f} is not 0 or 1"))),
    };
    if cur.pos != bytes.len() {
        return Err(Error::format(
            cur.pos as u64,
            format!("{} trailing bytes", bytes.len() - cur.pos),
        ));
    }
    Ok(Checkpoint {
        model,
        sample_rate_hz,
        optimizer,
    })
}

fn decode_optimizer(cur: &mut Cursor, params: usize) -> Result<OptimizerState> {
    let at = cur.pos;
    let kind = match cur.u8("optimizer kind")? {
        0 => OptimizerKind::Sgd,
        1 => OptimizerKind::Adam,
        k => return Err(Error::format(at as u64, format!("unknown optimizer kind {k}"))),
    };
    let lr = cur.f64("learning rate")?;
    let beta1 = cur.f64("beta1")?;
    let beta2 = cur.f64("beta2")?;
    let eps_hat = cur.f64("epsilon")?;
    let t = cur.u64("step counter")?;
    let at = cur.pos;
    let n = cur.u64("moment length")? as usize;
    let expected = if kind == OptimizerKind::Adam { params } else { 0 };
    if n != expected {
        return Err(Error::format(
            at as u64,
            format!("optimizer holds {n} moments, model needs {expected}"),
        ));
    }
    let m = (0..n).map(|_| cur.f64("first moment")).collect::<Result<_>>()?;
    let v = (0..n).map(|_| cur.f64("second moment")).collect::<Result<_>>()?;
    Ok(OptimizerState {
        kind,
        lr,
        beta1,
        beta2,
        eps_hat,
        t,
        m,
        v,
    })
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &Model,
    sample_rate_hz: u32,
    optimizer: Option<&OptimizerState>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model, sample_rate_hz, optimizer)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Vector;

    fn header_len(config: &NetworkConfig) -> usize {
        let scalar = 1 + 4 + 4;
        let list = |n: usize| 1 + 4 + 4 + 4 * n;
        let skip = 1 + 4 + 1;
        // magic, version, rate, field count
        let fixed = 9 + 2 + 4 + 1;
        fixed + 5 * scalar + list(config.encoder_channels.len()) + list(config.decoder_channels.len()) + skip + 4
    }

    #[test]
    fn size_is_header_plus_four_bytes_per_parameter() {
        let model = Model::init(NetworkConfig::default(), 1).unwrap();
        let bytes = encode_checkpoint(&model, 400, None);
        let layers: usize = model
            .config()
            .layer_shapes()
            .unwrap()
            .iter()
            .map(|s| 16 + 4 * s.param_count())
            .sum();
        assert_eq!(bytes.len(), header_len(model.config()) + layers + 1);
    }

    #[test]
    fn round_trip_matches_forward_output() {
        let model = Model::init(NetworkConfig::default(), 4).unwrap();
        let back = decode_checkpoint(&encode_checkpoint(&model, 400, None)).unwrap();
        assert_eq!(back.sample_rate_hz, 400);
        assert!(back.optimizer.is_none());
        let seg = Vector::from_fn(256, |m| (m as f64 * 0.05).sin()).unwrap();
        let a = model.predict(&seg).unwrap();
        let b = back.model.predict(&seg).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn optimizer_state_round_trips() {
        let model = Model::init(NetworkConfig::default().with_order(1), 4).unwrap();
        let mut adam = OptimizerState::adam(0.001, &model);
        adam.t = 17;
        adam.m[3] = 0.25;
        adam.v[5] = 1e-9;
        let back = decode_checkpoint(&encode_checkpoint(&model, 250, Some(&adam))).unwrap();
        assert_eq!(back.optimizer, Some(adam));
        assert_eq!(back.sample_rate_hz, 250);
        let sgd = OptimizerState::sgd(0.1);
        let back = decode_checkpoint(&encode_checkpoint(&model, 250, Some(&sgd))).unwrap();
        assert_eq!(back.optimizer, Some(sgd));
    }

    #[test]
    fn corrupt_shape_names_the_layer() {
        let model = Model::init(NetworkConfig::default(), 4).unwrap();
        let mut bytes = encode_checkpoint(&model, 400, None);
        let first_layer = header_len(model.config());
        // Q of layer 0 sits 12 bytes into its shape header
        bytes[first_layer + 12] = 9;
        let err = decode_checkpoint(&bytes).unwrap_err().to_string();
        assert!(err.contains("layer 0"), "{err}");
    }

    #[test]
    fn header_and_shape_corruptions_are_rejected() {
        let model = Model::init(NetworkConfig::default(), 4).unwrap();
        let bytes = encode_checkpoint(&model, 400, None);
        let mut guarded: Vec<usize> = (0..11).collect();
        // every per-layer shape header
        let mut pos = header_len(model.config());
        for s in model.config().layer_shapes().unwrap() {
            guarded.extend(pos..pos + 16);
            pos += 16 + 4 * s.param_count();
        }
        for p in guarded {
            for flip in [0x01u8, 0x80, 0xFF] {
                let mut bad = bytes.clone();
                bad[p] ^= flip;
                assert!(decode_checkpoint(&bad).is_err(), "byte {p} ^ {flip:#x}");
            }
        }
    }
}
