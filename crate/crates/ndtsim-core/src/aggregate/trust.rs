//! Aggregation rules that weigh contributors by behavioral trust:
//! update-history similarity, alignment with a server reference
//! update, or accumulated direction-flip suspicion.

use serde::{Deserialize, Serialize};

use crate::aggregate::rules::mean_aggregate;
use crate::error::{Error, Result};
use crate::params::{check_models, ParamVector};

/// Cumulative update history per contributor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoolsGoldState {
    pub histories: Vec<ParamVector>,
}

impl FoolsGoldState {
    pub fn new(num_models: usize, dim: usize) -> Self {
        FoolsGoldState {
            histories: vec![ParamVector::zeros(dim); num_models],
        }
    }

    /// Adds this round's updates into the running histories.
    pub fn observe(&mut self, updates: &[ParamVector]) -> Result<()> {
        if updates.len() != self.histories.len() {
            return Err(Error::DimensionMismatch {
                expected: self.histories.len(),
                got: updates.len(),
            });
        }
        for (h, u) in self.histories.iter_mut().zip(updates) {
            *h = h.add(u)?;
        }
        Ok(())
    }
}

/// Per-contributor weights from pairwise cosine similarity of update
/// histories: colluders with near-identical histories are driven
/// toward zero weight via pardoning and a logit rescale.
pub fn foolsgold_weights(histories: &[ParamVector]) -> Result<Vec<f64>> {
    let n = histories.len();
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let mut cs = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = histories[i].cosine(&histories[j])?;
            cs[i][j] = c;
            cs[j][i] = c;
        }
    }
    let maxcs: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| cs[i][j])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    // Pardoning: an honest contributor matched by a colluder gets its
    // similarity discounted by the trust ratio.
    for i in 0..n {
        for j in 0..n {
            if i != j && maxcs[j] > maxcs[i] && maxcs[j] > 0.0 {
                cs[i][j] *= maxcs[i] / maxcs[j];
            }
        }
    }
    let mut wv: Vec<f64> = (0..n)
        .map(|i| {
            let m = (0..n)
                .filter(|&j| j != i)
                .map(|j| cs[i][j])
                .fold(f64::NEG_INFINITY, f64::max);
            (1.0 - m).clamp(0.0, 1.0)
        })
        .collect();
    let top = wv.iter().fold(0.0f64, |a, &b| a.max(b));
    if top == 0.0 {
        return Ok(wv);
    }
    for w in wv.iter_mut() {
        *w /= top;
        // Logit sharpening; the endpoints saturate to 0 and 1.
        *w = if *w >= 1.0 {
            1.0
        } else if *w <= 0.0 {
            0.0
        } else {
            ((*w / (1.0 - *w)).ln() + 0.5).clamp(0.0, 1.0)
        };
    }
    Ok(wv)
}

/// Weighted mean of the models under history-based weights; falls back
/// to the plain mean when every weight vanishes.
pub fn foolsgold_aggregate(
    models: &[ParamVector],
    histories: &[ParamVector],
) -> Result<ParamVector> {
    let dim = check_models(models, "foolsgold aggregation")?;
    if models.len() == 1 {
        return Ok(models[0].clone());
    }
    if histories.len() != models.len() {
        return Err(Error::DimensionMismatch {
            expected: models.len(),
            got: histories.len(),
        });
    }
    let weights = foolsgold_weights(histories)?;
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return mean_aggregate(models);
    }
    let mut acc = vec![0.0; dim];
    for (m, w) in models.iter().zip(&weights) {
        for (a, v) in acc.iter_mut().zip(m.values()) {
            *a += w * v;
        }
    }
    Ok(ParamVector::new(
        acc.into_iter().map(|v| v / total).collect(),
    ))
}

/// Trust-scored aggregation against a reference update computed by the
/// server on its own clean data. Updates are taken relative to
/// `prior`, rescaled to the reference norm, and combined with
/// ReLU-cosine trust weights; zero total trust keeps the prior.
pub fn fltrust_aggregate(
    models: &[ParamVector],
    prior: &ParamVector,
    server_update: &ParamVector,
) -> Result<ParamVector> {
    let dim = check_models(models, "fltrust aggregation")?;
    if prior.dim() != dim || server_update.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: prior.dim().max(server_update.dim()),
        });
    }
    let server_norm = server_update.l2_norm();
    let mut trust_total = 0.0;
    let mut acc = vec![0.0; dim];
    for m in models {
        let update = m.sub(prior)?;
        let trust = update.cosine(server_update)?.max(0.0);
        if trust == 0.0 {
            continue;
        }
        let norm = update.l2_norm();
        if norm == 0.0 {
            continue;
        }
        let rescaled = update.scale(server_norm / norm);
        trust_total += trust;
        for (a, v) in acc.iter_mut().zip(rescaled.values()) {
            *a += trust * v;
        }
    }
    if trust_total == 0.0 {
        return Ok(prior.clone());
    }
    let combined = ParamVector::new(acc.into_iter().map(|v| v / trust_total).collect());
    prior.add(&combined)
}

/// Suspicion accumulated from direction flips across rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlairState {
    pub suspicion: Vec<f64>,
    /// Global update applied last round; zeros before the first round.
    pub prev_global_update: ParamVector,
}

const FLAIR_DECAY: f64 = 0.9;

impl FlairState {
    pub fn new(num_models: usize, dim: usize) -> Self {
        FlairState {
            suspicion: vec![0.0; num_models],
            prev_global_update: ParamVector::zeros(dim),
        }
    }
}

/// Magnitude of a contributor's update mass that opposes the previous
/// global update direction; coordinates where either side is zero do
/// not count as flips.
pub fn flair_flip_score(update: &ParamVector, prev_global_update: &ParamVector) -> Result<f64> {
    if update.dim() != prev_global_update.dim() {
        return Err(Error::DimensionMismatch {
            expected: prev_global_update.dim(),
            got: update.dim(),
        });
    }
    Ok(update
        .values()
        .iter()
        .zip(prev_global_update.values())
        .filter(|(u, p)| **u * **p < 0.0)
        .map(|(u, _)| u.abs())
        .sum())
}

/// Flip-score weighted aggregation with exponentially decayed
/// suspicion; weights are a softmax over negated suspicion. Updates
/// `state` with the new suspicion and the applied global update.
pub fn flair_aggregate(
    models: &[ParamVector],
    prior: &ParamVector,
    state: &mut FlairState,
) -> Result<ParamVector> {
    let dim = check_models(models, "flair aggregation")?;
    if prior.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: prior.dim(),
        });
    }
    if state.suspicion.len() != models.len() || state.prev_global_update.dim() != dim {
        return Err(Error::InvalidParameter(
            "flair state shape does not match the model set".into(),
        ));
    }
    let updates: Vec<ParamVector> = models
        .iter()
        .map(|m| m.sub(prior))
        .collect::<Result<_>>()?;
    let flips: Vec<f64> = updates
        .iter()
        .map(|u| flair_flip_score(u, &state.prev_global_update))
        .collect::<Result<_>>()?;
    let max_flip = flips.iter().fold(0.0f64, |a, &b| a.max(b));
    for (s, f) in state.suspicion.iter_mut().zip(&flips) {
        let normalized = if max_flip > 0.0 { f / max_flip } else { 0.0 };
        *s = FLAIR_DECAY * *s + normalized;
    }

    let peak = state
        .suspicion
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let raw: Vec<f64> = state.suspicion.iter().map(|s| (peak - s).exp()).collect();
    let total: f64 = raw.iter().sum();

    let mut acc = vec![0.0; dim];
    for (u, w) in updates.iter().zip(&raw) {
        for (a, v) in acc.iter_mut().zip(u.values()) {
            *a += w / total * v;
        }
    }
    let combined = ParamVector::new(acc);
    let next = prior.add(&combined)?;
    state.prev_global_update = combined;
    Ok(next)
}
