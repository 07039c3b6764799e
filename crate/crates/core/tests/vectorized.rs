//! The matrix-product forward pass and the sum-of-convolutions form against
//! the term-by-term reference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonn_core::{GenerativeLayer, LayerShape, Vector};

fn max_abs(a: &[Vector], b: &[Vector]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y.iter()))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn sweep_against_reference() {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for kw in [1, 3, 5, 9] {
            for order in [1, 2, 3, 5, 7] {
                let in_ch = rng.random_range(1..=4);
                let out_ch = rng.random_range(1..=4);
                let len = rng.random_range(kw.max(1)..=64);
                let layer = GenerativeLayer::init(LayerShape::new(in_ch, out_ch, kw, order).unwrap(), seed).unwrap();
                let inputs: Vec<Vector> = (0..in_ch)
                    .map(|_| Vector::from_fn(len, |_| rng.random_range(-1.0..1.0)).unwrap())
                    .collect();
                let reference = layer.forward_naive(&inputs).unwrap();
                let (fast, _) = layer.forward(&inputs).unwrap();
                let convs = layer.forward_by_convolutions(&inputs).unwrap();
                worst = worst.max(max_abs(&reference, &fast)).max(max_abs(&reference, &convs));
                cases += 1;
            }
        }
    }
    assert_eq!(cases, 400);
    assert!(worst <= 1e-10, "max abs error {worst:e}");
}

#[test]
fn single_sample_input() {
    let layer = GenerativeLayer::init(LayerShape::new(1, 2, 1, 3).unwrap(), 4).unwrap();
    let inputs = vec![Vector::new(vec![0.5]).unwrap()];
    assert!(
        max_abs(
            &layer.forward_naive(&inputs).unwrap(),
            &layer.forward(&inputs).unwrap().0
        ) <= 1e-15
    );
}

mod whole_graph {
    use sonn_core::network::Layer;
    use sonn_core::{GenerativeLayer, LayerGradients, LayerShape, Model, NetworkConfig, Result, Vector};

    /// Runs every stage through the term-by-term reference pass.
    #[derive(Clone)]
    struct Reference(GenerativeLayer);

    impl Layer for Reference {
        type Cache = ();

        fn shape(&self) -> LayerShape {
            self.0.shape()
        }
        fn forward(&self, inputs: &[Vector]) -> Result<(Vec<Vector>, ())> {
            Ok((self.0.forward_naive(inputs)?, ()))
        }
        fn backward(&self, _: &(), _: &[Vector]) -> Result<LayerGradients> {
            unreachable!("inference only")
        }
        fn weights(&self) -> &[f64] {
            self.0.weights()
        }
        fn biases(&self) -> &[f64] {
            self.0.biases()
        }
        fn weights_mut(&mut self) -> &mut [f64] {
            self.0.weights_mut()
        }
        fn biases_mut(&mut self) -> &mut [f64] {
            self.0.biases_mut()
        }
    }

    #[test]
    fn model_matches_reference_graph() {
        for q in [1, 3, 7] {
            let config = NetworkConfig::default().with_order(q);
            let model = Model::init(config.clone(), 21).unwrap();
            let reference =
                Model::from_layers(config, model.layers().iter().cloned().map(Reference).collect()).unwrap();
            let x = Vector::from_fn(400, |m| (m as f64 * 0.07).sin() * 0.9).unwrap();
            let (a, b) = (model.predict(&x).unwrap(), reference.predict(&x).unwrap());
            let worst = a.iter().zip(b.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-9, "Q={q}: {worst:e}");
        }
    }
}
