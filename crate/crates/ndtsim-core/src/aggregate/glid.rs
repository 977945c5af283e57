//! Inconsistency-detecting aggregation: per dimension, flag values
//! whose rank percentile falls outside an estimated pair of bounds,
//! then average the survivors with inverse-deviation weights.

use rayon::prelude::*;

use crate::aggregate::estimator::{estimate_pair, EstimatorConfig};
use crate::aggregate::stats::{g_interp, DimensionStats};
use crate::error::{Error, Result};
use crate::params::{check_models, ParamVector};

/// Per-(dimension, model) outlier flags from one aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct FlagMatrix {
    num_models: usize,
    dims: usize,
    flags: Vec<bool>,
}

impl FlagMatrix {
    fn new(num_models: usize, dims: usize) -> Self {
        FlagMatrix {
            num_models,
            dims,
            flags: vec![false; num_models * dims],
        }
    }

    pub fn num_models(&self) -> usize {
        self.num_models
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn flagged(&self, dim: usize, model: usize) -> bool {
        self.flags[dim * self.num_models + model]
    }

    /// Number of dimensions in which `model` was flagged.
    pub fn count_for_model(&self, model: usize) -> u32 {
        (0..self.dims).filter(|&d| self.flagged(d, model)).count() as u32
    }

    pub fn total(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

struct DimOutcome {
    value: f64,
    flags: Vec<bool>,
}

fn aggregate_dimension(values: &[f64], cfg: &EstimatorConfig) -> Result<DimOutcome> {
    let stats = DimensionStats::from_values(values)?;
    // No dispersion: identical values cannot be told apart, keep all.
    if stats.sd == 0.0 {
        return Ok(DimOutcome {
            value: stats.mean,
            flags: vec![false; values.len()],
        });
    }
    let pair = estimate_pair(values, cfg)?;
    let mut flags = Vec::with_capacity(values.len());
    for v in values {
        let g = g_interp(*v, &stats.sorted)?;
        flags.push(!(pair.lo <= g && g < pair.hi));
    }

    let floor = (1e-6 * stats.sd).max(1e-8);
    let mut weight_sum = 0.0;
    let mut weighted = 0.0;
    for (v, flagged) in values.iter().zip(&flags) {
        if !*flagged {
            let w = stats.sd / (v - stats.mean).abs().max(floor);
            weight_sum += w;
            weighted += w * v;
        }
    }
    let value = if weight_sum > 0.0 {
        weighted / weight_sum
    } else {
        // Everything flagged: fall back to the plain median.
        median_of_sorted(&stats.sorted)
    };
    Ok(DimOutcome { value, flags })
}

/// Aggregates at least three models, returning the combined model and
/// the per-dimension outlier flags.
pub fn glid_aggregate(
    models: &[ParamVector],
    cfg: &EstimatorConfig,
) -> Result<(ParamVector, FlagMatrix)> {
    let dim = check_models(models, "glid aggregation")?;
    if models.len() < 3 {
        return Err(Error::NotEnoughModels {
            got: models.len(),
            min: 3,
        });
    }
    cfg.validate()?;

    let outcomes: Vec<DimOutcome> = (0..dim)
        .into_par_iter()
        .map(|d| {
            let values: Vec<f64> = models.iter().map(|m| m[d]).collect();
            aggregate_dimension(&values, cfg)
        })
        .collect::<Result<_>>()?;

    let mut matrix = FlagMatrix::new(models.len(), dim);
    let mut out = Vec::with_capacity(dim);
    for (d, outcome) in outcomes.into_iter().enumerate() {
        out.push(outcome.value);
        for (i, f) in outcome.flags.into_iter().enumerate() {
            matrix.flags[d * models.len() + i] = f;
        }
    }
    Ok((ParamVector::new(out), matrix))
}
