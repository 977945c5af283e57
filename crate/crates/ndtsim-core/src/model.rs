//! Traffic predictors: a linear autoregressor and a small tanh MLP,
//! trained by mini-batch gradient descent on quadratic loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::series::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Linear,
    Mlp,
}

/// Predictor architecture and local-training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    /// Hidden layer widths; used by the MLP only.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch: usize,
    #[serde(default = "default_epochs")]
    pub local_epochs: usize,
}

fn default_hidden() -> Vec<usize> {
    vec![8]
}

fn default_epochs() -> usize {
    1
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidParameter("lr must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidParameter("batch must be >= 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::InvalidParameter("local_epochs must be >= 1".into()));
        }
        if self.kind == PredictorKind::Mlp && (self.hidden.is_empty() || self.hidden.contains(&0))
        {
            return Err(Error::InvalidParameter(
                "mlp needs at least one non-empty hidden layer".into(),
            ));
        }
        Ok(())
    }

    /// Layer widths from input to the scalar output; linear has none.
    fn layer_sizes(&self, input_dim: usize) -> Vec<usize> {
        match self.kind {
            PredictorKind::Linear => vec![input_dim, 1],
            PredictorKind::Mlp => {
                let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
                sizes.push(input_dim);
                sizes.extend_from_slice(&self.hidden);
                sizes.push(1);
                sizes
            }
        }
    }

    pub fn param_dim(&self, input_dim: usize) -> usize {
        match self.kind {
            // [w_1 .. w_input_dim, bias]
            PredictorKind::Linear => input_dim + 1,
            PredictorKind::Mlp => {
                let sizes = self.layer_sizes(input_dim);
                sizes
                    .windows(2)
                    .map(|w| w[1] * w[0] + w[1])
                    .sum()
            }
        }
    }

    /// Initial global model: zeros for linear, seeded small-uniform
    /// weights for the MLP (zeros would leave hidden units symmetric).
    pub fn init_params(&self, input_dim: usize, seed: u64) -> ParamVector {
        let dim = self.param_dim(input_dim);
        match self.kind {
            PredictorKind::Linear => ParamVector::zeros(dim),
            PredictorKind::Mlp => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let values = (0..dim)
                    .map(|_| rand::Rng::gen_range(&mut rng, -0.1..0.1))
                    .collect();
                ParamVector::new(values)
            }
        }
    }
}

pub fn quadratic_loss(pred: f64, target: f64) -> f64 {
    let d = pred - target;
    d * d
}

fn check_shapes(
    params: &ParamVector,
    cfg: &PredictorConfig,
    input_dim: usize,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    let expected = cfg.param_dim(input_dim);
    if params.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: params.dim(),
        });
    }
    Ok(cfg.layer_sizes(input_dim))
}

/// Forward pass. Hidden layers use tanh; the output is linear. When
/// `acts` is given, post-activation values are stored per layer for
/// backpropagation (`acts[0]` is the input).
fn forward(
    params: &[f64],
    sizes: &[usize],
    input: &[f64],
    mut acts: Option<&mut Vec<Vec<f64>>>,
) -> f64 {
    if let Some(acts) = acts.as_deref_mut() {
        acts.clear();
        acts.push(input.to_vec());
    }
    let mut current = input.to_vec();
    let mut offset = 0;
    let last = sizes.len() - 2;
    for (layer, w) in sizes.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let weights = &params[offset..offset + n_out * n_in];
        let biases = &params[offset + n_out * n_in..offset + n_out * n_in + n_out];
        offset += n_out * n_in + n_out;
        let mut next = Vec::with_capacity(n_out);
        for r in 0..n_out {
            let row = &weights[r * n_in..(r + 1) * n_in];
            let mut z = biases[r];
            for (wv, xv) in row.iter().zip(&current) {
                z += wv * xv;
            }
            next.push(if layer == last { z } else { z.tanh() });
        }
        if let Some(acts) = acts.as_deref_mut() {
            acts.push(next.clone());
        }
        current = next;
    }
    current[0]
}

/// Predicted load for one input window.
pub fn predict(params: &ParamVector, cfg: &PredictorConfig, input: &[f64]) -> Result<f64> {
    let sizes = check_shapes(params, cfg, input.len())?;
    params.check_finite("predict params")?;
    Ok(forward(params.values(), &sizes, input, None))
}

/// Gradient of `quadratic_loss(predict(params, input), target)` with
/// respect to every parameter, in parameter layout order.
pub fn loss_gradient(
    params: &ParamVector,
    cfg: &PredictorConfig,
    input: &[f64],
    target: f64,
) -> Result<Vec<f64>> {
    let sizes = check_shapes(params, cfg, input.len())?;
    let mut grad = vec![0.0; params.dim()];
    let mut acts = Vec::new();
    accumulate_gradient(params.values(), &sizes, input, target, &mut acts, &mut grad);
    Ok(grad)
}

/// Adds one sample's loss gradient into `grad`.
fn accumulate_gradient(
    params: &[f64],
    sizes: &[usize],
    input: &[f64],
    target: f64,
    acts: &mut Vec<Vec<f64>>,
    grad: &mut [f64],
) {
    let pred = forward(params, sizes, input, Some(acts));
    let mut delta = vec![2.0 * (pred - target)];

    // Per-layer parameter offsets, front to back.
    let mut offsets = Vec::with_capacity(sizes.len() - 1);
    let mut offset = 0;
    for w in sizes.windows(2) {
        offsets.push(offset);
        offset += w[1] * w[0] + w[1];
    }

    for layer in (0..sizes.len() - 1).rev() {
        let (n_in, n_out) = (sizes[layer], sizes[layer + 1]);
        let base = offsets[layer];
        let prev = &acts[layer];
        let weights = &params[base..base + n_out * n_in];
        for r in 0..n_out {
            for c in 0..n_in {
                grad[base + r * n_in + c] += delta[r] * prev[c];
            }
            grad[base + n_out * n_in + r] += delta[r];
        }
        if layer > 0 {
            // tanh'(z) = 1 - tanh(z)^2, and acts stores tanh(z).
            let mut next_delta = vec![0.0; n_in];
            for (c, nd) in next_delta.iter_mut().enumerate() {
                let mut s = 0.0;
                for (r, d) in delta.iter().enumerate() {
                    s += d * weights[r * n_in + c];
                }
                *nd = s * (1.0 - prev[c] * prev[c]);
            }
            delta = next_delta;
        }
    }
}

/// One local training pass: `local_epochs` sweeps of mini-batch
/// gradient descent over the samples, shuffled deterministically from
/// `seed`. The last short batch of each sweep is kept. Returns the
/// refined model; the input model is untouched.
pub fn local_update(
    params: &ParamVector,
    cfg: &PredictorConfig,
    samples: &SampleSet,
    seed: u64,
) -> Result<ParamVector> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let sizes = check_shapes(params, cfg, samples.feature_dim())?;
    params.check_finite("local_update params")?;

    let mut theta = params.values().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..samples.len()).collect();
    let mut grad = vec![0.0; theta.len()];
    let mut acts = Vec::new();

    for _ in 0..cfg.local_epochs {
        indices.shuffle(&mut rng);
        for batch in indices.chunks(cfg.batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                accumulate_gradient(
                    &theta,
                    &sizes,
                    samples.input(i),
                    samples.target(i),
                    &mut acts,
                    &mut grad,
                );
            }
            let scale = cfg.lr / batch.len() as f64;
            for (t, g) in theta.iter_mut().zip(&grad) {
                *t -= scale * g;
            }
        }
    }
    Ok(ParamVector::new(theta))
}

/// Mean training loss over a sample set.
pub fn dataset_loss(
    params: &ParamVector,
    cfg: &PredictorConfig,
    samples: &SampleSet,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let sizes = check_shapes(params, cfg, samples.feature_dim())?;
    let total: f64 = samples
        .iter()
        .map(|(x, y)| quadratic_loss(forward(params.values(), &sizes, x, None), y))
        .sum();
    Ok(total / samples.len() as f64)
}

/// MAE and MSE over a sample set, each independently capped at `cap`.
pub fn evaluate(
    params: &ParamVector,
    cfg: &PredictorConfig,
    samples: &SampleSet,
    cap: f64,
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(cap.is_finite() && cap > 0.0) {
        return Err(Error::InvalidParameter("cap must be positive".into()));
    }
    let sizes = check_shapes(params, cfg, samples.feature_dim())?;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for (x, y) in samples.iter() {
        let err = forward(params.values(), &sizes, x, None) - y;
        abs_sum += err.abs();
        sq_sum += err * err;
    }
    let n = samples.len() as f64;
    Ok(((abs_sum / n).min(cap), (sq_sum / n).min(cap)))
}
