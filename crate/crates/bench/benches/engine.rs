use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use osadas_bench::{noise_image, oracle, unit_vectors};
use osadas_core::explain::{osa_das, ExplainerConfig};
use osadas_core::metrics::{evaluate, MetricConfig};
use osadas_core::subspace::{canonical_cosines, uncentered_pca};
use osadas_core::Heatmap;

fn subspace(c: &mut Criterion) {
    let small = unit_vectors(1, 32, 768);
    let wide = unit_vectors(2, 32, 2048);
    c.bench_function("pca/k768_m32", |b| b.iter(|| uncentered_pca(black_box(&small), 32).unwrap()));
    c.bench_function("pca/k2048_m32_gram", |b| b.iter(|| uncentered_pca(black_box(&wide), 32).unwrap()));
    let v = uncentered_pca(&small, 32).unwrap();
    let w = uncentered_pca(&unit_vectors(3, 32, 768), 32).unwrap();
    c.bench_function("canonical_cosines/d32", |b| b.iter(|| canonical_cosines(black_box(&v), &w, 4).unwrap()));
}

fn explain(c: &mut Criterion) {
    let model = oracle();
    let image = noise_image(4, 224);
    let config = ExplainerConfig {
        masks: 64,
        augmentations: 8,
        seed: 7,
        ..Default::default()
    };
    let mut group = c.benchmark_group("osa_das");
    group.sample_size(10);
    group.bench_function("oracle_224", |b| b.iter(|| osa_das(black_box(&image), &model, &config).unwrap()));
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let model = oracle();
    let image = noise_image(5, 224);
    let heatmap = Heatmap::random(224, 224, 6);
    let config = MetricConfig::default();
    let mut group = c.benchmark_group("metrics");
    group.sample_size(10);
    group.bench_function("evaluate_oracle_224", |b| {
        b.iter(|| evaluate(black_box(&image), &heatmap, &model, &config).unwrap())
    });
    group.finish();
}

criterion_group!(benches, subspace, explain, metrics);
criterion_main!(benches);
