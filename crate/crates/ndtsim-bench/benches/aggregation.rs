//! Round-level cost of each aggregation rule on a population with a
//! fifth of the models pushed far from the benign bulk.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ndtsim_bench::model_population;
use ndtsim_core::aggregate::{
    faba_aggregate, glid_aggregate, krum_aggregate, mean_aggregate, median_aggregate,
    trimmed_mean_aggregate, EstimatorConfig, EstimatorKind,
};

const DIM: usize = 64;

fn bench_rules(c: &mut Criterion) {
    let mut group = c.benchmark_group("aggregate");
    for &n in &[20usize, 100] {
        let models = model_population(n, DIM, 0.2, 11);
        group.bench_with_input(BenchmarkId::new("mean", n), &models, |b, m| {
            b.iter(|| mean_aggregate(black_box(m)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("median", n), &models, |b, m| {
            b.iter(|| median_aggregate(black_box(m)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("trim", n), &models, |b, m| {
            b.iter(|| trimmed_mean_aggregate(black_box(m), 0.2).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("krum", n), &models, |b, m| {
            b.iter(|| krum_aggregate(black_box(m), n / 5).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("faba", n), &models, |b, m| {
            b.iter(|| faba_aggregate(black_box(m), 0.2).unwrap())
        });
    }
    group.finish();
}

fn bench_detection(c: &mut Criterion) {
    let mut group = c.benchmark_group("glid");
    for method in [EstimatorKind::Sd, EstimatorKind::Iqr, EstimatorKind::Ocsvm] {
        let cfg = EstimatorConfig {
            method,
            ..EstimatorConfig::default()
        };
        for &n in &[20usize, 100] {
            let models = model_population(n, DIM, 0.2, 11);
            let label = format!("{method:?}").to_lowercase();
            group.bench_with_input(BenchmarkId::new(label, n), &models, |b, m| {
                b.iter(|| glid_aggregate(black_box(m), &cfg).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_rules, bench_detection);
criterion_main!(benches);
