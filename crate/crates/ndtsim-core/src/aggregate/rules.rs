//! Classic aggregation rules: averaging, order statistics, and
//! distance-based outlier exclusion.

use crate::error::{Error, Result};
use crate::params::{check_models, ParamVector};

/// Arithmetic mean per dimension.
pub fn mean_aggregate(models: &[ParamVector]) -> Result<ParamVector> {
    let dim = check_models(models, "mean aggregation")?;
    let n = models.len() as f64;
    let mut acc = vec![0.0; dim];
    for m in models {
        for (a, v) in acc.iter_mut().zip(m.values()) {
            *a += v;
        }
    }
    Ok(ParamVector::new(acc.into_iter().map(|v| v / n).collect()))
}

/// Per-dimension median; even counts average the two middle values.
pub fn median_aggregate(models: &[ParamVector]) -> Result<ParamVector> {
    let dim = check_models(models, "median aggregation")?;
    let n = models.len();
    let mut out = Vec::with_capacity(dim);
    let mut column = vec![0.0; n];
    for d in 0..dim {
        for (c, m) in column.iter_mut().zip(models) {
            *c = m[d];
        }
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(if n % 2 == 1 {
            column[n / 2]
        } else {
            (column[n / 2 - 1] + column[n / 2]) / 2.0
        });
    }
    Ok(ParamVector::new(out))
}

/// Per dimension, drops ceil(trim_frac/2 * N) values from each tail
/// and means the rest. `trim_frac` is the total discarded share.
pub fn trimmed_mean_aggregate(models: &[ParamVector], trim_frac: f64) -> Result<ParamVector> {
    let dim = check_models(models, "trimmed mean aggregation")?;
    if !(trim_frac.is_finite() && (0.0..0.5).contains(&trim_frac)) {
        return Err(Error::InvalidParameter(format!(
            "trim_frac {trim_frac} outside [0, 0.5)"
        )));
    }
    let n = models.len();
    let cut = (trim_frac / 2.0 * n as f64).ceil() as usize;
    if 2 * cut >= n {
        return Err(Error::InvalidParameter(format!(
            "trim_frac {trim_frac} discards all {n} models"
        )));
    }
    let mut out = Vec::with_capacity(dim);
    let mut column = vec![0.0; n];
    for d in 0..dim {
        for (c, m) in column.iter_mut().zip(models) {
            *c = m[d];
        }
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let kept = &column[cut..n - cut];
        out.push(kept.iter().sum::<f64>() / kept.len() as f64);
    }
    Ok(ParamVector::new(out))
}

/// Index of the model whose summed squared distance to its
/// N - f - 2 nearest peers is smallest; ties go to the lowest index.
pub fn krum_select(models: &[ParamVector], f: usize) -> Result<usize> {
    let _ = check_models(models, "krum aggregation")?;
    let n = models.len();
    if n < f + 3 {
        return Err(Error::NotEnoughModels { got: n, min: f + 3 });
    }
    let neighbors = n - f - 2;
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for i in 0..n {
        let mut dists: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d = models[i].l2_dist(&models[j]).expect("dims checked");
                d * d
            })
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let score: f64 = dists[..neighbors].iter().sum();
        if score < best_score {
            best_score = score;
            best = i;
        }
    }
    Ok(best)
}

/// Returns the selected model itself.
pub fn krum_aggregate(models: &[ParamVector], f: usize) -> Result<ParamVector> {
    Ok(models[krum_select(models, f)?].clone())
}

/// Iteratively drops the model farthest from the current mean,
/// ceil(faba_frac * N) times, then means the survivors.
pub fn faba_aggregate(models: &[ParamVector], faba_frac: f64) -> Result<ParamVector> {
    let _ = check_models(models, "faba aggregation")?;
    if !(faba_frac.is_finite() && (0.0..1.0).contains(&faba_frac)) {
        return Err(Error::InvalidParameter(format!(
            "faba_frac {faba_frac} outside [0, 1)"
        )));
    }
    let n = models.len();
    let removals = (faba_frac * n as f64).ceil() as usize;
    if removals >= n {
        return Err(Error::InvalidParameter(format!(
            "faba_frac {faba_frac} discards all {n} models"
        )));
    }
    let mut alive: Vec<usize> = (0..n).collect();
    for _ in 0..removals {
        let current: Vec<ParamVector> = alive.iter().map(|&i| models[i].clone()).collect();
        let center = mean_aggregate(&current)?;
        let mut worst_pos = 0;
        let mut worst_dist = -1.0;
        for (pos, &i) in alive.iter().enumerate() {
            let d = models[i].l2_dist(&center)?;
            if d > worst_dist {
                worst_dist = d;
                worst_pos = pos;
            }
        }
        alive.remove(worst_pos);
    }
    let survivors: Vec<ParamVector> = alive.iter().map(|&i| models[i].clone()).collect();
    mean_aggregate(&survivors)
}
