//! Input builders shared by the benches. Everything is seeded so a
//! bench run always measures the same workload.

use ndtsim_core::params::ParamVector;
use ndtsim_core::series::SampleSet;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `n` models of dimension `dim`: a tight benign bulk around a shared
/// center, with the last `outlier_frac` of them pushed far out on
/// every coordinate. Mirrors what aggregation sees under an attack.
pub fn model_population(n: usize, dim: usize, outlier_frac: f64, seed: u64) -> Vec<ParamVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let outliers = ((n as f64) * outlier_frac).round() as usize;
    (0..n)
        .map(|i| {
            let scale = if i >= n - outliers { 40.0 } else { 1.0 };
            let values = center
                .iter()
                .map(|c| c + scale * rng.gen_range(-0.05..0.05) + (scale - 1.0))
                .collect();
            ParamVector::new(values)
        })
        .collect()
}

/// A batch of forecasting samples with inputs in the load range the
/// simulator produces after standardization.
pub fn forecast_samples(count: usize, input_dim: usize, seed: u64) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..input_dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let targets = (0..count).map(|_| rng.gen_range(-2.0..2.0)).collect();
    SampleSet::new(inputs, targets)
}
