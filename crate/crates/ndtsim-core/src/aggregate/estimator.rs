//! Per-dimension percentile-pair estimators: dispersion bounds mapped
//! through the rank percentile function, or a fixed pair.

use serde::{Deserialize, Serialize};

use crate::aggregate::stats::{g_interp, DimensionStats};
use crate::error::{Error, Result};

/// Lower and upper percentile bounds in [0, 100]. A dimension value is
/// kept when its percentile lies in [lo, hi); values at or above `hi`
/// are treated as outliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentilePair {
    pub lo: f64,
    pub hi: f64,
}

impl PercentilePair {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let pair = PercentilePair { lo, hi };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lo.is_finite()
            && self.hi.is_finite()
            && (0.0..=100.0).contains(&self.lo)
            && (0.0..=100.0).contains(&self.hi)
            && self.lo <= self.hi;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "percentile pair ({}, {}) must satisfy 0 <= lo <= hi <= 100",
                self.lo, self.hi
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Mean plus/minus k standard deviations.
    Sd,
    /// Quartiles widened by k_iqr interquartile ranges.
    Iqr,
    /// Mean plus/minus k_z standard deviations.
    Zscore,
    /// One-class SVM inlier span.
    Ocsvm,
    /// Constant configured pair.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    #[serde(default = "default_method")]
    pub method: EstimatorKind,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default = "default_k_iqr")]
    pub k_iqr: f64,
    #[serde(default = "default_k")]
    pub k_z: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_fixed_pair")]
    pub fixed_pair: PercentilePair,
}

fn default_method() -> EstimatorKind {
    EstimatorKind::Sd
}

fn default_k() -> f64 {
    3.0
}

fn default_k_iqr() -> f64 {
    1.5
}

fn default_nu() -> f64 {
    0.1
}

fn default_gamma() -> f64 {
    1.0
}

fn default_fixed_pair() -> PercentilePair {
    PercentilePair { lo: 10.0, hi: 90.0 }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            method: default_method(),
            k: default_k(),
            k_iqr: default_k_iqr(),
            k_z: default_k(),
            nu: default_nu(),
            gamma: default_gamma(),
            fixed_pair: default_fixed_pair(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k", self.k), ("k_iqr", self.k_iqr), ("k_z", self.k_z)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(self.nu.is_finite() && self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "nu must lie in (0, 1], got {}",
                self.nu
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        self.fixed_pair.validate()
    }
}

/// Estimates the percentile pair for one dimension's values.
pub fn estimate_pair(values: &[f64], cfg: &EstimatorConfig) -> Result<PercentilePair> {
    cfg.validate()?;
    if values.len() < 3 {
        return Err(Error::NotEnoughModels {
            got: values.len(),
            min: 3,
        });
    }
    if cfg.method == EstimatorKind::Fixed {
        return Ok(cfg.fixed_pair);
    }
    let stats = DimensionStats::from_values(values)?;
    let (lo_val, hi_val) = match cfg.method {
        EstimatorKind::Sd => (stats.mean - cfg.k * stats.sd, stats.mean + cfg.k * stats.sd),
        EstimatorKind::Zscore => (
            stats.mean - cfg.k_z * stats.sd,
            stats.mean + cfg.k_z * stats.sd,
        ),
        EstimatorKind::Iqr => {
            let iqr = stats.q3 - stats.q1;
            (stats.q1 - cfg.k_iqr * iqr, stats.q3 + cfg.k_iqr * iqr)
        }
        EstimatorKind::Ocsvm => {
            let svm = OneClassSvm::train(&stats.sorted, cfg.nu, cfg.gamma)?;
            let inliers: Vec<f64> = stats
                .sorted
                .iter()
                .copied()
                .filter(|v| svm.decision(*v) >= 0.0)
                .collect();
            match (inliers.first(), inliers.last()) {
                (Some(&lo), Some(&hi)) => (lo, hi),
                // Every training value rejected: keep everything.
                _ => return PercentilePair::new(0.0, 100.0),
            }
        }
        EstimatorKind::Fixed => unreachable!(),
    };
    PercentilePair::new(
        g_interp(lo_val, &stats.sorted)?,
        g_interp(hi_val, &stats.sorted)?,
    )
}

/// Scalar one-class SVM with an RBF kernel, trained by pairwise dual
/// coordinate descent on min (1/2) a'Ka subject to 0 <= a_i <= 1/(nu N)
/// and sum a = 1.
#[derive(Debug, Clone)]
pub struct OneClassSvm {
    values: Vec<f64>,
    alphas: Vec<f64>,
    rho: f64,
    gamma: f64,
}

const SVM_GAP_TOL: f64 = 1e-6;
const SVM_MAX_ITERS: usize = 10_000;

impl OneClassSvm {
    pub fn train(values: &[f64], nu: f64, gamma: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySamples);
        }
        if !(nu > 0.0 && nu <= 1.0) || !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "one-class SVM needs nu in (0,1] and gamma > 0, got nu={nu} gamma={gamma}"
            )));
        }
        let n = values.len();
        let cap = 1.0 / (nu * n as f64);
        let kernel = |u: f64, v: f64| (-gamma * (u - v) * (u - v)).exp();

        let mut alphas = vec![1.0 / n as f64; n];
        // grad_i = (K alpha)_i, maintained incrementally.
        let mut grad: Vec<f64> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| alphas[j] * kernel(values[i], values[j]))
                    .sum()
            })
            .collect();

        for _ in 0..SVM_MAX_ITERS {
            // Move mass off the steepest loaded coordinate; the
            // receiver is the unsaturated coordinate whose pair
            // update gains the most, not merely the flattest one,
            // which keeps clustered kernels converging.
            let mut up: Option<usize> = None;
            let mut down: Option<usize> = None;
            for i in 0..n {
                if alphas[i] > 0.0 && up.map_or(true, |u| grad[i] > grad[u]) {
                    up = Some(i);
                }
                if alphas[i] < cap && down.map_or(true, |d| grad[i] < grad[d]) {
                    down = Some(i);
                }
            }
            let i = match (up, down) {
                (Some(i), Some(j)) if grad[i] - grad[j] > SVM_GAP_TOL => i,
                _ => break,
            };
            let curvature_with = |j: usize| (2.0 - 2.0 * kernel(values[i], values[j])).max(1e-12);
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                if alphas[j] < cap && grad[j] < grad[i] {
                    let gap = grad[i] - grad[j];
                    let gain = gap * gap / curvature_with(j);
                    if best.map_or(true, |(_, g)| gain > g) {
                        best = Some((j, gain));
                    }
                }
            }
            let Some((j, _)) = best else { break };
            let step = ((grad[i] - grad[j]) / curvature_with(j))
                .min(alphas[i])
                .min(cap - alphas[j]);
            if step <= 0.0 {
                break;
            }
            alphas[i] -= step;
            alphas[j] += step;
            for k in 0..n {
                grad[k] += step * (kernel(values[j], values[k]) - kernel(values[i], values[k]));
            }
        }

        // Offset from margin support vectors; saturated/empty box
        // levels bracket it when none are strictly inside. Free
        // vectors only reach within the gap tolerance of the true
        // offset, so it is cushioned by that tolerance below.
        let margin: Vec<f64> = (0..n)
            .filter(|&i| alphas[i] > 1e-10 * cap && alphas[i] < cap * (1.0 - 1e-10))
            .map(|i| grad[i])
            .collect();
        let rho = if !margin.is_empty() {
            margin.iter().sum::<f64>() / margin.len() as f64
        } else {
            let hi = (0..n)
                .filter(|&i| alphas[i] >= cap * (1.0 - 1e-10))
                .map(|i| grad[i])
                .fold(f64::NEG_INFINITY, f64::max);
            let lo = (0..n)
                .filter(|&i| alphas[i] <= 1e-10 * cap)
                .map(|i| grad[i])
                .fold(f64::INFINITY, f64::min);
            match (hi.is_finite(), lo.is_finite()) {
                (true, true) => (hi + lo) / 2.0,
                (true, false) => hi,
                (false, true) => lo,
                (false, false) => grad.iter().sum::<f64>() / n as f64,
            }
        };

        Ok(OneClassSvm {
            values: values.to_vec(),
            alphas,
            rho: rho - SVM_GAP_TOL,
            gamma,
        })
    }

    /// Decision value; non-negative for inliers.
    pub fn decision(&self, x: f64) -> f64 {
        let score: f64 = self
            .values
            .iter()
            .zip(&self.alphas)
            .filter(|(_, a)| **a > 0.0)
            .map(|(v, a)| a * (-self.gamma * (x - v) * (x - v)).exp())
            .sum();
        score - self.rho
    }

    pub fn inlier_count(&self) -> usize {
        self.values
            .iter()
            .filter(|v| self.decision(**v) >= 0.0)
            .count()
    }
}
