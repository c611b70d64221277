use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rejectnet_bench::{spec10, synthetic, trained_desk};
use rejectnet_core::attacks::{box_min_perturbation, deepfool, fgs, BoxMinConfig};
use rejectnet_core::ensemble::{derive_subsets, vote_outputs, ConfusionMatrix};
use rejectnet_core::{Network, NetworkConfig, Tensor};

fn network(c: &mut Criterion) {
    let (train, _) = synthetic();
    let desk = trained_desk(&train);
    let x = &train.samples()[0].image;
    c.bench_function("desk predict", |b| {
        b.iter(|| desk.predict(black_box(x)).unwrap())
    });
    c.bench_function("desk input gradient", |b| {
        b.iter(|| desk.input_gradient(black_box(x), 0).unwrap())
    });
    let batch = &train.samples()[..32];
    c.bench_function("desk batch gradient (32)", |b| {
        b.iter(|| desk.param_gradients(black_box(batch)).unwrap())
    });

    let mnist = Network::new(NetworkConfig::mnist_conv(1)).unwrap();
    let digit = Tensor::new(
        vec![1, 28, 28],
        (0..784).map(|i| (i % 17) as f64 / 17.0).collect(),
    )
    .unwrap();
    c.bench_function("mnist conv predict", |b| {
        b.iter(|| mnist.predict(black_box(&digit)).unwrap())
    });
    c.bench_function("mnist conv input gradient", |b| {
        b.iter(|| mnist.input_gradient(black_box(&digit), 3).unwrap())
    });
}

fn attacks(c: &mut Criterion) {
    let (train, _) = synthetic();
    let net = trained_desk(&train);
    let s = train
        .samples()
        .iter()
        .find(|s| net.predict_class(&s.image).unwrap() == s.label)
        .expect("some sample is classified correctly");
    c.bench_function("fgs", |b| {
        b.iter(|| fgs(&net, black_box(&s.image), s.label, 0.1).unwrap())
    });
    c.bench_function("deepfool", |b| {
        b.iter(|| deepfool(&net, black_box(&s.image), s.label, 50, 0.02).unwrap())
    });
    let cfg = BoxMinConfig {
        search_steps: 4,
        iterations: 50,
        ..BoxMinConfig::default()
    };
    c.bench_function("box-min", |b| {
        b.iter(|| box_min_perturbation(&net, black_box(&s.image), s.label, None, &cfg).unwrap())
    });
}

fn ensemble(c: &mut Criterion) {
    let spec = spec10();
    let outputs: Vec<Vec<f64>> = spec
        .subsets()
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let mut v = vec![0.0; 10];
            let n = s.classes.len() as f64;
            for (r, &k) in s.classes.iter().enumerate() {
                v[k] = (1.0 + ((r + j) % 3) as f64) / (2.0 * n);
            }
            let total: f64 = v.iter().sum();
            v.iter().map(|p| p / total).collect()
        })
        .collect();
    c.bench_function("vote (K=10)", |b| {
        b.iter(|| vote_outputs(&spec, black_box(&outputs)).unwrap())
    });
    let counts: Vec<Vec<u64>> = (0..10)
        .map(|i| {
            (0..10)
                .map(|j| if i == j { 0 } else { (i * j % 13) as u64 + 1 })
                .collect()
        })
        .collect();
    let cm = ConfusionMatrix::from_counts(counts).unwrap();
    c.bench_function("derive subsets (K=10)", |b| {
        b.iter(|| derive_subsets(black_box(&cm), 0.8).unwrap())
    });
}

criterion_group!(benches, network, attacks, ensemble);
criterion_main!(benches);
