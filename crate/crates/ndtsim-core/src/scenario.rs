//! Experiment description: one config fully determines one run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::aggregate::AggregatorConfig;
use crate::attack::{self, AttackConfig};
use crate::clustering::AffinityWeights;
use crate::data::{CsvSchema, SynthSpec};
use crate::error::{Error, Result};
use crate::model::PredictorConfig;
use crate::series::WindowSpec;

/// Share of each NDT's samples used for training; the rest is the
/// chronologically later test split.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Number of clusters, or a single flat pool where the global rule
/// sees every model directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClusterMode {
    Count(usize),
    Word(FlatWord),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatWord {
    Flat,
}

impl ClusterMode {
    pub fn flat() -> Self {
        ClusterMode::Word(FlatWord::Flat)
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, ClusterMode::Word(FlatWord::Flat))
    }

    /// Cluster count in clustered mode.
    pub fn count(&self) -> Option<usize> {
        match self {
            ClusterMode::Count(c) => Some(*c),
            ClusterMode::Word(_) => None,
        }
    }
}

/// Which aggregation tier applies the configured defense; the other
/// tier falls back to the plain mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TierOfDefense {
    #[default]
    Cluster,
    Global,
    Both,
}

/// Where fake NDTs attach in clustered mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FakePlacement {
    /// Each fake joins a uniformly drawn cluster (seeded).
    #[default]
    Uniform,
    /// Worst case: every fake joins cluster 0.
    SingleCluster,
}

/// Synthetic traffic shape; NDT count and seed come from the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    #[serde(default = "default_length")]
    pub length: usize,
    #[serde(default = "default_daily_period")]
    pub daily_period: usize,
    #[serde(default = "default_base")]
    pub base: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default = "default_heterogeneity")]
    pub heterogeneity: f64,
    #[serde(default = "default_interval_seconds")]
    pub interval_seconds: u64,
}

fn default_length() -> usize {
    480
}
fn default_daily_period() -> usize {
    48
}
fn default_base() -> f64 {
    50.0
}
fn default_amplitude() -> f64 {
    20.0
}
fn default_noise_sd() -> f64 {
    2.0
}
fn default_heterogeneity() -> f64 {
    0.3
}
fn default_interval_seconds() -> u64 {
    1800
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            length: default_length(),
            daily_period: default_daily_period(),
            base: default_base(),
            amplitude: default_amplitude(),
            noise_sd: default_noise_sd(),
            heterogeneity: default_heterogeneity(),
            interval_seconds: default_interval_seconds(),
        }
    }
}

impl SynthParams {
    pub fn to_spec(&self, num_ndts: usize, seed: u64) -> SynthSpec {
        SynthSpec {
            num_ndts,
            length: self.length,
            daily_period: self.daily_period,
            base: self.base,
            amplitude: self.amplitude,
            noise_sd: self.noise_sd,
            heterogeneity: self.heterogeneity,
            seed,
            interval_seconds: self.interval_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvDataConfig {
    pub path: PathBuf,
    #[serde(default = "default_csv_interval")]
    pub interval_seconds: u64,
    #[serde(default)]
    pub schema: CsvSchema,
}

fn default_csv_interval() -> u64 {
    600
}

/// Traffic source for the benign NDTs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    Synth(SynthParams),
    Csv(CsvDataConfig),
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synth(SynthParams::default())
    }
}

/// Everything one experiment needs. Two equal configs always produce
/// identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub num_benign: usize,
    /// Fraction of the combined population that is fake: m/(n+m).
    #[serde(default)]
    pub fake_fraction: f64,
    pub rounds_v: usize,
    #[serde(default)]
    pub rounds_h: usize,
    pub window: WindowSpec,
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub attack: Option<AttackConfig>,
    pub defense: AggregatorConfig,
    #[serde(default = "default_clusters")]
    pub clusters: ClusterMode,
    /// Deviation threshold gating global refreshes between full
    /// synchronizations; infinity freezes the global model.
    #[serde(default = "default_psi")]
    pub psi: f64,
    /// Upper bound applied to each reported error metric.
    #[serde(default = "default_cap")]
    pub cap: f64,
    #[serde(default)]
    pub tier_of_defense: TierOfDefense,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub placement: FakePlacement,
    /// 0 clusters once at start; k > 0 re-runs clustering every k rounds.
    #[serde(default)]
    pub recluster_every_rounds: usize,
    #[serde(default)]
    pub affinity: AffinityWeights,
    /// Node attributes CSV; synthesized from the seed when absent.
    #[serde(default)]
    pub attributes: Option<PathBuf>,
}

fn default_clusters() -> ClusterMode {
    ClusterMode::flat()
}
fn default_psi() -> f64 {
    1e-4
}
fn default_cap() -> f64 {
    100.0
}

impl ScenarioConfig {
    /// Fake NDT count implied by `fake_fraction`.
    pub fn num_fakes(&self) -> Result<usize> {
        attack::num_fakes(self.num_benign, self.fake_fraction)
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        fn note(problems: &mut Vec<String>, r: Result<()>) {
            if let Err(e) = r {
                problems.push(e.to_string());
            }
        }
        let mut problems: Vec<String> = Vec::new();

        if self.num_benign == 0 {
            problems.push("num_benign must be >= 1".into());
        }
        if !(self.fake_fraction.is_finite() && (0.0..=0.5).contains(&self.fake_fraction)) {
            problems.push("fake_fraction must lie in [0, 0.5]".into());
        }
        if self.fake_fraction > 0.0 && self.attack.is_none() {
            problems.push("fake_fraction > 0 requires an attack section".into());
        }
        if self.psi.is_nan() || self.psi < 0.0 {
            problems.push("psi must be >= 0".into());
        }
        if !(self.cap.is_finite() && self.cap > 0.0) {
            problems.push("cap must be positive".into());
        }
        note(&mut problems, self.window.validate());
        note(&mut problems, self.predictor.validate());
        if let Some(attack) = &self.attack {
            note(&mut problems, attack.validate());
        }
        note(&mut problems, self.defense.validate());
        match self.clusters {
            ClusterMode::Count(0) => {
                problems.push("clusters must be >= 1 or \"flat\"".into());
            }
            ClusterMode::Count(c) if c > self.num_benign => {
                problems.push(format!(
                    "clusters ({c}) cannot exceed num_benign ({})",
                    self.num_benign
                ));
            }
            _ => {}
        }
        match &self.data {
            DataConfig::Synth(params) => {
                note(&mut problems, params.to_spec(self.num_benign.max(1), 0).validate());
                // Both chronological splits must be non-empty.
                let lookback = self.window.min_series_len().saturating_sub(1);
                if self.window.validate().is_ok() && params.length < lookback + 2 {
                    problems.push(format!(
                        "data.length ({}) too short for the window; need at least {}",
                        params.length,
                        lookback + 2
                    ));
                }
            }
            DataConfig::Csv(csv) => {
                if csv.interval_seconds == 0 {
                    problems.push("data.interval_seconds must be >= 1".into());
                }
                if csv.path.as_os_str().is_empty() {
                    problems.push("data.path must not be empty".into());
                }
            }
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}
