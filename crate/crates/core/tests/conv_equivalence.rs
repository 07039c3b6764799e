//! First-order generative layers and networks against the plain convolution
//! baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonn_core::conv::ConvLayer;
use sonn_core::network::Mode;
use sonn_core::{GenerativeLayer, LayerShape, Model, NetworkConfig, Vector};

fn random_inputs(rng: &mut ChaCha8Rng, channels: usize, len: usize) -> Vec<Vector> {
    (0..channels)
        .map(|_| Vector::from_fn(len, |_| rng.random_range(-1.0..1.0)).unwrap())
        .collect()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn flat(v: &[Vector]) -> Vec<f64> {
    v.iter().flat_map(|x| x.iter().copied()).collect()
}

#[test]
fn layer_forward_and_gradients_match_convolution() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_ch = rng.random_range(1..=4);
        let out_ch = rng.random_range(1..=4);
        let kw = [1, 3, 5, 7, 9][rng.random_range(0..5)];
        let len = rng.random_range(kw.max(2)..=64);
        let shape = LayerShape::new(in_ch, out_ch, kw, 1).unwrap();
        let layer = GenerativeLayer::init(shape, seed).unwrap();
        let conv = ConvLayer::from_generative(&layer).unwrap();
        let inputs = random_inputs(&mut rng, in_ch, len);
        let d_out = random_inputs(&mut rng, out_ch, len);

        let (out, cache) = layer.forward(&inputs).unwrap();
        let expected = conv.forward(&inputs).unwrap();
        assert!(max_abs(&flat(&out), &flat(&expected)) <= 1e-10, "seed {seed}: forward");

        let g = layer.backward(&cache, &d_out).unwrap();
        let c = conv.backward(&inputs, &d_out).unwrap();
        assert!(max_abs(&g.d_weights, &c.d_weights) <= 1e-10, "seed {seed}: weights");
        assert!(max_abs(&g.d_biases, &c.d_biases) <= 1e-10, "seed {seed}: biases");
        assert!(
            max_abs(&flat(&g.d_input), &flat(&c.d_input)) <= 1e-10,
            "seed {seed}: input"
        );
    }
}

#[test]
fn order_one_network_matches_convolution_network() {
    let config = NetworkConfig::default().with_order(1);
    for seed in 0..3u64 {
        let mut model = Model::init(config.clone(), seed).unwrap();
        model.set_mode(Mode::Train);
        let layers = model
            .layers()
            .iter()
            .map(|l| ConvLayer::from_generative(l).unwrap())
            .collect();
        let mut conv = Model::from_layers(config.clone(), layers).unwrap();
        conv.set_mode(Mode::Train);

        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let segment = Vector::from_fn(128, |_| rng.random_range(-1.0..1.0)).unwrap();
        let d_pred = Vector::from_fn(128, |_| rng.random_range(-1.0..1.0)).unwrap();

        let (p, cache) = model.forward(&segment).unwrap();
        let (pc, conv_cache) = conv.forward(&segment).unwrap();
        assert!(max_abs(&p, &pc) <= 1e-10);
        let g = model.backward(&cache.unwrap(), &d_pred).unwrap();
        let gc = conv.backward(&conv_cache.unwrap(), &d_pred).unwrap();
        let a: Vec<f64> = g.iter().collect();
        let b: Vec<f64> = gc.iter().collect();
        assert!(max_abs(&a, &b) <= 1e-10);
    }
}

#[test]
fn higher_orders_are_not_convolutions() {
    let layer = GenerativeLayer::init(LayerShape::new(2, 2, 3, 3).unwrap(), 0).unwrap();
    assert!(ConvLayer::from_generative(&layer).is_err());
}
