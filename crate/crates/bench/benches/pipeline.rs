//! Hot-path benchmarks: network passes, normalizer updates/transforms,
//! ranking metrics, buffer maintenance, and gradient projection.
//!
//! Sizes mirror one training step of the default experiment shape
//! (20 features, 128-wide hidden layers, thousands of rows per batch).

use std::hint::black_box;

use cleanstream_core::norm::Normalizer;
use cleanstream_core::{
    agem_project, auroc, CleanNormalizer, CnNormalizer, FeatureMatrix, FlatGradient, Matrix,
    MlpModel, ReservoirBuffer, ScoredPredictions,
};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FEATURES: usize = 20;
const BATCH: usize = 1024;

fn random_block(rows: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..rows * FEATURES)
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    let labels: Vec<u8> = (0..rows).map(|_| u8::from(rng.random::<f64>() < 0.3)).collect();
    FeatureMatrix::new(Matrix::from_vec(rows, FEATURES, data).unwrap(), labels).unwrap()
}

fn network_passes(c: &mut Criterion) {
    let block = random_block(BATCH, 1);
    let mut model = MlpModel::new(&[FEATURES, 128, 128, 128, 128, 1], 0.5, 7).unwrap();
    model.attach_input_scaling();

    c.bench_function("forward_1024x20_net128x4", |b| {
        b.iter(|| black_box(model.forward(black_box(block.values())).unwrap()))
    });
    c.bench_function("backward_1024x20_net128x4", |b| {
        b.iter(|| black_box(model.backward(black_box(block.values()), block.labels()).unwrap()))
    });
}

fn normalizer_paths(c: &mut Criterion) {
    let block = random_block(BATCH * 8, 2);

    let mut clean = CleanNormalizer::new(FEATURES, 0.9, 1e-8).unwrap();
    clean.update(&block).unwrap();
    c.bench_function("clean_update_8192x20", |b| {
        b.iter(|| {
            let mut n = clean.clone();
            n.update(black_box(&block)).unwrap();
            black_box(n.state_version())
        })
    });
    c.bench_function("clean_transform_8192x20", |b| {
        b.iter(|| black_box(clean.transform(black_box(block.values())).unwrap()))
    });

    let mut cn = CnNormalizer::new(FEATURES, 0.1, 1e-8).unwrap();
    cn.update(&block).unwrap();
    c.bench_function("cn_transform_8192x20", |b| {
        b.iter(|| black_box(cn.transform(black_box(block.values())).unwrap()))
    });
}

fn ranking_metric(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scores: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<u8> = (0..10_000).map(|_| u8::from(rng.random::<f64>() < 0.3)).collect();
    let scored = ScoredPredictions::new(scores, labels).unwrap();
    c.bench_function("auroc_10000_rows", |b| {
        b.iter(|| black_box(auroc(black_box(&scored)).unwrap()))
    });
}

fn buffer_maintenance(c: &mut Criterion) {
    let block = random_block(10_000, 4);
    let seeded = {
        let mut buf = ReservoirBuffer::new(5_000, 11).unwrap();
        buf.offer_block(&block);
        buf
    };
    c.bench_function("reservoir_offer_10000_rows", |b| {
        b.iter(|| {
            let mut buf = seeded.clone();
            buf.offer_block(black_box(&block));
            black_box(buf.len())
        })
    });
}

fn gradient_projection(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dim = 68_000; // roughly the default network's parameter count
    let grad: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let reference: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let reference = FlatGradient::from_vec(reference);
    c.bench_function("agem_project_68000_params", |b| {
        b.iter(|| {
            let mut g = FlatGradient::from_vec(grad.clone());
            agem_project(&mut g, black_box(&reference)).unwrap();
            black_box(g.as_slice()[0])
        })
    });
}

criterion_group!(
    benches,
    network_passes,
    normalizer_paths,
    ranking_metric,
    buffer_maintenance,
    gradient_projection
);
criterion_main!(benches);
