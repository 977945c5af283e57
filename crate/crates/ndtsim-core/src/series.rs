//! Traffic time series and the sliding-window sample layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Load measurements for one NDT at a fixed interval, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSeries {
    pub ndt_id: String,
    pub loads: Vec<f64>,
    pub interval_seconds: u64,
}

impl TrafficSeries {
    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }
}

/// Input window layout for the traffic predictor.
///
/// A sample for target interval `l` concatenates `recent` immediately
/// preceding loads (newest first) with `cyclic` loads taken one period
/// apart: `d[l-1] .. d[l-recent], d[l-period] .. d[l-period*cyclic]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Number of immediately preceding intervals (`a`).
    pub recent: usize,
    /// Number of period-spaced intervals (`b`).
    pub cyclic: usize,
    /// Spacing of the cyclic window in intervals (`rho`).
    pub period: usize,
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.recent + self.cyclic == 0 {
            return Err(Error::InvalidParameter(
                "window needs recent + cyclic >= 1".into(),
            ));
        }
        if self.period == 0 {
            return Err(Error::InvalidParameter("window period must be >= 1".into()));
        }
        Ok(())
    }

    /// Feature count of one input vector.
    pub fn input_dim(&self) -> usize {
        self.recent + self.cyclic
    }

    /// Oldest interval any input reaches back, relative to its target.
    pub fn lookback(&self) -> usize {
        self.recent.max(self.period * self.cyclic)
    }

    /// Shortest series that yields at least one sample.
    pub fn min_series_len(&self) -> usize {
        self.recent + self.period * self.cyclic + 1
    }
}

/// Windowed supervised samples for one NDT.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl SampleSet {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Self {
        assert_eq!(inputs.len(), targets.len());
        SampleSet { inputs, targets }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.inputs
            .iter()
            .map(Vec::as_slice)
            .zip(self.targets.iter().copied())
    }

    /// Chronological split: first `frac` of samples, then the rest.
    pub fn split(&self, frac: f64) -> (SampleSet, SampleSet) {
        let cut = ((self.len() as f64) * frac).floor() as usize;
        let cut = cut.min(self.len());
        (
            SampleSet::new(self.inputs[..cut].to_vec(), self.targets[..cut].to_vec()),
            SampleSet::new(self.inputs[cut..].to_vec(), self.targets[cut..].to_vec()),
        )
    }
}

/// Slides the window over a series, producing one sample per interval
/// that has full lookback history.
///
/// Yields exactly `len - lookback` samples in chronological order.
pub fn build_samples(series: &TrafficSeries, window: &WindowSpec) -> Result<SampleSet> {
    window.validate()?;
    let min = window.min_series_len();
    if series.len() < min {
        return Err(Error::SeriesTooShort {
            id: series.ndt_id.clone(),
            len: series.len(),
            min,
        });
    }
    let lookback = window.lookback();
    let n = series.len() - lookback;
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for l in lookback..series.len() {
        let mut x = Vec::with_capacity(window.input_dim());
        for j in 1..=window.recent {
            x.push(series.loads[l - j]);
        }
        for j in 1..=window.cyclic {
            x.push(series.loads[l - window.period * j]);
        }
        inputs.push(x);
        targets.push(series.loads[l]);
    }
    Ok(SampleSet::new(inputs, targets))
}
