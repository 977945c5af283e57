//! Order statistics shared by the percentile estimators and the
//! inconsistency-detection aggregator.

use crate::error::{Error, Result};

/// Rank-to-percentile interpolation over a sorted sample. A value's
/// 1-based rank P (ties averaged, positions between samples linearly
/// interpolated) maps to ((P - 0.5) / N) * 100, clipped to [0, 100];
/// values outside the sample clip to the nearest end.
pub fn g_interp(x: f64, sorted: &[f64]) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = sorted.len();
    if x < sorted[0] {
        return Ok(0.0);
    }
    if x > sorted[n - 1] {
        return Ok(100.0);
    }
    let lo = sorted.partition_point(|v| *v < x);
    let hi = sorted.partition_point(|v| *v <= x);
    let rank = if lo < hi {
        // Exact hit: ranks lo+1 ..= hi, averaged.
        (lo + 1 + hi) as f64 / 2.0
    } else {
        // Strictly between sorted[lo-1] and sorted[lo]: interpolate
        // between the two tie-averaged knot ranks.
        let below = sorted[lo - 1];
        let above = sorted[lo];
        let below_lo = sorted.partition_point(|v| *v < below);
        let rank_below = (below_lo + 1 + lo) as f64 / 2.0;
        let above_hi = sorted.partition_point(|v| *v <= above);
        let rank_above = (lo + 1 + above_hi) as f64 / 2.0;
        rank_below + (x - below) / (above - below) * (rank_above - rank_below)
    };
    Ok((((rank - 0.5) / n as f64) * 100.0).clamp(0.0, 100.0))
}

/// Linear-interpolation quantile of a sorted sample: index h=(N-1)q,
/// interpolated between the straddling order statistics.
pub fn quantile_r7(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!("quantile {q} outside [0,1]")));
    }
    let h = (sorted.len() - 1) as f64 * q;
    let i = h.floor() as usize;
    let frac = h - i as f64;
    if frac == 0.0 || i + 1 >= sorted.len() {
        Ok(sorted[i])
    } else {
        Ok(sorted[i] + frac * (sorted[i + 1] - sorted[i]))
    }
}

/// Moments and quartiles of one parameter dimension across models.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionStats {
    pub mean: f64,
    /// Population standard deviation (divisor N).
    pub sd: f64,
    pub q1: f64,
    pub q3: f64,
    pub sorted: Vec<f64>,
}

impl DimensionStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySamples);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "dimension values",
            });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q1 = quantile_r7(&sorted, 0.25)?;
        let q3 = quantile_r7(&sorted, 0.75)?;
        Ok(DimensionStats {
            mean,
            sd,
            q1,
            q3,
            sorted,
        })
    }
}
