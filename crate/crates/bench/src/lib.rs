//! Benchmark fixtures and groups for the metric kernels.

use criterion::{black_box, BenchmarkId, Criterion};
use disent_core::dataset::{validate_pairing, GridFactor, PairedDataset, SPEAKER, STYLE};
use disent_core::discretize::{bin_pooled, pool_time_axis, BinnedCodes, BinningSpec, Pooling};
use disent_core::predictor::{auc_roc, stratified_split, train_on, CodeFeatures, FeatureScope, Hyperparameters, SplitConfig, TrainConfig};
use disent_core::synth::{generate, GeneratorSpec};
use disent_core::{info, irs};

/// Planted speaker/style/gender dataset with `n` samples.
pub fn fixture(n: usize, seq_len: usize) -> PairedDataset {
    let spec = GeneratorSpec::planted(vec![GridFactor::new(SPEAKER, 25), GridFactor::new(STYLE, 4)], n, seq_len, 1);
    let (factors, codes, _) = generate(&spec).expect("valid fixture spec");
    validate_pairing(factors, codes).expect("generated pair")
}

pub fn binned(data: &PairedDataset) -> BinnedCodes {
    bin_pooled(&pool_time_axis(data.codes(), Pooling::Mean), BinningSpec::default_codes()).expect("binnable")
}

fn bench_mi(c: &mut Criterion) {
    let mut group = c.benchmark_group("mi_matrix");
    for n in [10_000, 50_000] {
        let data = fixture(n, 1);
        let codes = binned(&data);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| info::mi_matrix(black_box(&data), black_box(&codes)).unwrap())
        });
    }
    group.finish();
}

fn bench_irs(c: &mut Criterion) {
    let data = fixture(10_000, 1);
    let pooled = pool_time_axis(data.codes(), Pooling::Mean);
    let dims: Vec<usize> = (0..data.codes().n_dims()).collect();
    c.bench_function("irs_all_dims_10k", |b| {
        b.iter(|| irs::irs_score(black_box(&data), black_box(&pooled), 0, &dims, 2).unwrap())
    });
}

fn bench_train(c: &mut Criterion) {
    let data = fixture(10_000, 32);
    let labels = data.factors().column(0).unwrap();
    let split = stratified_split(labels, SplitConfig { test_fraction: 0.2, seed: 0 }).unwrap();
    let mut group = c.benchmark_group("logreg_one_epoch");
    group.sample_size(10);
    for scope in [FeatureScope::Dim(3), FeatureScope::All] {
        let features = CodeFeatures::new(data.codes(), scope).unwrap();
        let config = TrainConfig::new(Hyperparameters { epochs: 1, ..Default::default() }, 0);
        group.bench_function(scope.label(), |b| {
            b.iter(|| train_on(&features, &split.train, labels, 25, &config).unwrap())
        });
    }
    group.finish();
}

fn bench_auc(c: &mut Criterion) {
    let scores: Vec<f64> = (0..100_000).map(|i| ((i * 7919) % 1000) as f64).collect();
    let positives: Vec<bool> = (0..100_000).map(|i| i % 3 == 0).collect();
    c.bench_function("auc_100k", |b| b.iter(|| auc_roc(black_box(&scores), black_box(&positives)).unwrap()));
}

pub fn benchmarks(c: &mut Criterion) {
    bench_mi(c);
    bench_irs(c);
    bench_train(c);
    bench_auc(c);
}
