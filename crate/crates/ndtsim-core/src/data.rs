//! Traffic data sources: CSV ingestion, synthetic generation, and
//! per-NDT standardization.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive, splitmix64};
use crate::series::TrafficSeries;

/// Column layout of a raw traffic CSV with a header row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    #[serde(default = "default_cell_column")]
    pub cell_column: String,
    #[serde(default = "default_time_column")]
    pub time_column: String,
    #[serde(default = "default_load_column")]
    pub load_column: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_cell_column() -> String {
    "cell_id".into()
}
fn default_time_column() -> String {
    "timestamp_ms".into()
}
fn default_load_column() -> String {
    "load".into()
}
fn default_delimiter() -> char {
    ','
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            cell_column: default_cell_column(),
            time_column: default_time_column(),
            load_column: default_load_column(),
            delimiter: default_delimiter(),
        }
    }
}

/// Synthetic traffic generator settings. Each NDT gets a daily
/// sinusoid whose amplitude and phase are perturbed per NDT by
/// `heterogeneity`, plus Gaussian noise, clipped at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_ndts: usize,
    /// Series length in intervals; at least two daily periods.
    pub length: usize,
    /// Intervals per day.
    pub daily_period: usize,
    pub base: f64,
    pub amplitude: f64,
    pub noise_sd: f64,
    /// 0 makes all NDTs statistically identical.
    pub heterogeneity: f64,
    pub seed: u64,
    #[serde(default = "default_interval_seconds")]
    pub interval_seconds: u64,
}

fn default_interval_seconds() -> u64 {
    600
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.num_ndts == 0 {
            problems.push("num_ndts must be >= 1");
        }
        if self.daily_period == 0 {
            problems.push("daily_period must be >= 1");
        }
        if self.length < 2 * self.daily_period {
            problems.push("length must cover at least two daily periods");
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            problems.push("noise_sd must be >= 0");
        }
        if !(self.heterogeneity.is_finite() && self.heterogeneity >= 0.0) {
            problems.push("heterogeneity must be >= 0");
        }
        if !self.base.is_finite() || !self.amplitude.is_finite() {
            problems.push("base and amplitude must be finite");
        }
        if self.interval_seconds == 0 {
            problems.push("interval_seconds must be >= 1");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

/// Generates the per-NDT series described by `spec`. Equal specs
/// always yield identical maps.
pub fn synth_generate(spec: &SynthSpec) -> Result<BTreeMap<String, TrafficSeries>> {
    spec.validate()?;
    let mut out = BTreeMap::new();
    let period = spec.daily_period as f64;
    for m in 0..spec.num_ndts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(spec.seed, splitmix64(m as u64)));
        let amp_jitter: f64 = rng.gen_range(-1.0..1.0);
        let phase_jitter: f64 = rng.gen_range(0.0..1.0);
        let amplitude = spec.amplitude * (1.0 + spec.heterogeneity * amp_jitter);
        let phase = spec.heterogeneity * phase_jitter * period;
        let noise = Normal::new(0.0, spec.noise_sd.max(f64::MIN_POSITIVE)).unwrap();
        let loads = (0..spec.length)
            .map(|l| {
                let angle = 2.0 * std::f64::consts::PI * (l as f64 + phase) / period;
                let noisy = if spec.noise_sd > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                (spec.base + amplitude * angle.sin() + noisy).max(0.0)
            })
            .collect();
        let id = format!("ndt{m:05}");
        out.insert(
            id.clone(),
            TrafficSeries {
                ndt_id: id,
                loads,
                interval_seconds: spec.interval_seconds,
            },
        );
    }
    Ok(out)
}

/// Reads raw `(cell, timestamp, load)` records, bins them into fixed
/// intervals (summing loads within a bin), and aligns every cell onto
/// the global interval range with zeros for missing bins.
pub fn ingest_csv(
    path: &Path,
    interval_seconds: u64,
    schema: &CsvSchema,
) -> Result<BTreeMap<String, TrafficSeries>> {
    if interval_seconds == 0 {
        return Err(Error::InvalidParameter("interval_seconds must be >= 1".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .from_path(path)
        .map_err(|e| Error::CsvParse {
            line: 0,
            msg: e.to_string(),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::CsvParse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::CsvParse {
                line: 1,
                msg: format!("missing column '{name}'"),
            })
    };
    let cell_col = col(&schema.cell_column)?;
    let time_col = col(&schema.time_column)?;
    let load_col = col(&schema.load_column)?;

    let interval_ms = interval_seconds as i64 * 1000;
    let mut bins: BTreeMap<String, BTreeMap<i64, f64>> = BTreeMap::new();
    let mut min_bin = i64::MAX;
    let mut max_bin = i64::MIN;

    for record in reader.records() {
        let record = record.map_err(|e| Error::CsvParse {
            line: 0,
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |idx: usize| {
            record.get(idx).ok_or_else(|| Error::CsvParse {
                line,
                msg: "short record".into(),
            })
        };
        let cell = field(cell_col)?.to_string();
        let timestamp: i64 = field(time_col)?.trim().parse().map_err(|_| Error::CsvParse {
            line,
            msg: format!("bad timestamp '{}'", field(time_col).unwrap_or("")),
        })?;
        let load: f64 = field(load_col)?.trim().parse().map_err(|_| Error::CsvParse {
            line,
            msg: format!("bad load '{}'", field(load_col).unwrap_or("")),
        })?;
        if !load.is_finite() {
            return Err(Error::CsvParse {
                line,
                msg: "non-finite load".into(),
            });
        }
        let bin = timestamp.div_euclid(interval_ms);
        min_bin = min_bin.min(bin);
        max_bin = max_bin.max(bin);
        *bins.entry(cell).or_default().entry(bin).or_insert(0.0) += load;
    }

    if bins.is_empty() {
        return Err(Error::CsvParse {
            line: 0,
            msg: "no data records".into(),
        });
    }

    let mut out = BTreeMap::new();
    for (cell, cell_bins) in bins {
        let loads = (min_bin..=max_bin)
            .map(|b| cell_bins.get(&b).copied().unwrap_or(0.0))
            .collect();
        out.insert(
            cell.clone(),
            TrafficSeries {
                ndt_id: cell,
                loads,
                interval_seconds,
            },
        );
    }
    Ok(out)
}

/// Writes one record per (cell, interval), including zero loads, with
/// timestamps starting at zero. `ingest_csv` on the output restores
/// the same map.
pub fn export_csv(path: &Path, series: &BTreeMap<String, TrafficSeries>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::CsvParse {
        line: 0,
        msg: e.to_string(),
    })?;
    writer
        .write_record(["cell_id", "timestamp_ms", "load"])
        .map_err(|e| Error::CsvParse {
            line: 0,
            msg: e.to_string(),
        })?;
    for s in series.values() {
        let interval_ms = s.interval_seconds as i64 * 1000;
        for (i, load) in s.loads.iter().enumerate() {
            writer
                .write_record([
                    s.ndt_id.as_str(),
                    &(i as i64 * interval_ms).to_string(),
                    &load.to_string(),
                ])
                .map_err(|e| Error::CsvParse {
                    line: 0,
                    msg: e.to_string(),
                })?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Z-score standardization with statistics from the first `train_len`
/// loads only (population variance, floor 1e-8 on the deviation).
/// Returns the normalized series with the mean and deviation used.
pub fn standardize(series: &TrafficSeries, train_len: usize) -> Result<(TrafficSeries, f64, f64)> {
    if train_len < 2 || train_len > series.len() {
        return Err(Error::InvalidParameter(format!(
            "train_len {} outside [2, {}]",
            train_len,
            series.len()
        )));
    }
    let train = &series.loads[..train_len];
    let mean = train.iter().sum::<f64>() / train_len as f64;
    let var = train.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / train_len as f64;
    let sd = var.sqrt().max(1e-8);
    let normalized = TrafficSeries {
        ndt_id: series.ndt_id.clone(),
        loads: series.loads.iter().map(|v| (v - mean) / sd).collect(),
        interval_seconds: series.interval_seconds,
    };
    Ok((normalized, mean, sd))
}
