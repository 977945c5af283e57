//! Simulation core for federated traffic-prediction twins: seeded
//! synthetic data, local predictor training, attribute-based
//! clustering, model poisoning attacks, and robust aggregation rules,
//! composed into a deterministic two-tier training loop.

pub mod aggregate;
pub mod attack;
pub mod clustering;
pub mod data;
pub mod error;
pub mod model;
pub mod orchestrator;
pub mod params;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod series;

pub use aggregate::{
    aggregate, AggregationContext, AggregationOutput, AggregatorConfig, EstimatorConfig,
    EstimatorKind, FlagMatrix, PercentilePair, RuleKind, RuleState,
};
pub use attack::{AttackConfig, AttackContext, AttackKind, AttackState, FtiState};
pub use clustering::{AffinityWeights, ClusterAssignment, NodeAttributes};
pub use data::{CsvSchema, SynthSpec};
pub use error::{Error, Result};
pub use model::{PredictorConfig, PredictorKind};
pub use orchestrator::{
    run_experiment, ExperimentOutcome, ExperimentReport, RoundRecord, Stage,
};
pub use params::ParamVector;
pub use scenario::{
    ClusterMode, DataConfig, FakePlacement, ScenarioConfig, SynthParams, TierOfDefense,
};
pub use series::{SampleSet, TrafficSeries, WindowSpec};
