//! Cost of one local SGD pass for both predictor shapes.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ndtsim_bench::forecast_samples;
use ndtsim_core::model::{local_update, PredictorConfig, PredictorKind};
use ndtsim_core::params::ParamVector;

const INPUT_DIM: usize = 7;

fn bench_local_update(c: &mut Criterion) {
    let mut group = c.benchmark_group("local_update");
    let shapes = [
        ("linear", PredictorKind::Linear, vec![]),
        ("mlp8", PredictorKind::Mlp, vec![8]),
        ("mlp16x16", PredictorKind::Mlp, vec![16, 16]),
    ];
    for (label, kind, hidden) in shapes {
        let cfg = PredictorConfig {
            kind,
            hidden,
            lr: 0.01,
            batch: 64,
            local_epochs: 1,
        };
        let params = ParamVector::zeros(cfg.param_dim(INPUT_DIM));
        for &count in &[64usize, 512] {
            let samples = forecast_samples(count, INPUT_DIM, 5);
            group.bench_with_input(
                BenchmarkId::new(label, count),
                &samples,
                |b, s| b.iter(|| local_update(black_box(&params), &cfg, s, 9).unwrap()),
            );
        }
    }
    group.finish();
}

criterion_group!(benches, bench_local_update);
criterion_main!(benches);
