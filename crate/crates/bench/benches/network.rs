use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sonn_core::network::{bce_loss, Mode};
use sonn_core::{Model, NetworkConfig, Vector};

fn segment(len: usize) -> Vector {
    Vector::from_fn(len, |m| (m as f64 * 0.05).sin()).unwrap()
}

fn predict(c: &mut Criterion) {
    let x = segment(8000);
    let mut group = c.benchmark_group("predict_8000");
    group.sample_size(20);
    for q in [1, 3, 5, 7] {
        let model = Model::init(NetworkConfig::default().with_order(q), 0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(q), &q, |b, _| {
            b.iter(|| model.predict(&x).unwrap())
        });
    }
    group.finish();
}

fn train_step(c: &mut Criterion) {
    let x = segment(1000);
    let target = Vector::from_fn(1000, |m| if m % 200 < 5 { 1.0 } else { 0.0 }).unwrap();
    let mut group = c.benchmark_group("forward_backward_1000");
    for q in [1, 3] {
        let mut model = Model::init(NetworkConfig::default().with_order(q), 0).unwrap();
        model.set_mode(Mode::Train);
        group.bench_with_input(BenchmarkId::from_parameter(q), &q, |b, _| {
            b.iter(|| {
                let (pred, cache) = model.forward(&x).unwrap();
                let (_, d) = bce_loss(&pred, &target).unwrap();
                model.backward(&cache.unwrap(), &d).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, predict, train_step);
criterion_main!(benches);
