//! Step III of the round loop: combining local models into one,
//! under a configurable rule.

pub mod estimator;
pub mod glid;
pub mod rules;
pub mod stats;
pub mod trust;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamVector;

pub use estimator::{estimate_pair, EstimatorConfig, EstimatorKind, OneClassSvm, PercentilePair};
pub use glid::{glid_aggregate, FlagMatrix};
pub use rules::{
    faba_aggregate, krum_aggregate, krum_select, mean_aggregate, median_aggregate,
    trimmed_mean_aggregate,
};
pub use stats::{g_interp, quantile_r7, DimensionStats};
pub use trust::{
    flair_aggregate, flair_flip_score, fltrust_aggregate, foolsgold_aggregate, foolsgold_weights,
    FlairState, FoolsGoldState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Mean,
    Median,
    Trim,
    Krum,
    Foolsgold,
    Faba,
    Fltrust,
    Flair,
    Glid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatorConfig {
    pub rule: RuleKind,
    /// Total share discarded by the trimmed mean.
    #[serde(default = "default_trim_frac")]
    pub trim_frac: f64,
    /// Share of models dropped by iterative farthest-from-mean removal.
    #[serde(default = "default_faba_frac")]
    pub faba_frac: f64,
    /// Assumed number of malicious models for the selection rule.
    #[serde(default)]
    pub krum_f: usize,
    #[serde(default)]
    pub estimator: EstimatorConfig,
}

fn default_trim_frac() -> f64 {
    0.2
}

fn default_faba_frac() -> f64 {
    0.2
}

impl AggregatorConfig {
    pub fn new(rule: RuleKind) -> Self {
        AggregatorConfig {
            rule,
            trim_frac: default_trim_frac(),
            faba_frac: default_faba_frac(),
            krum_f: 0,
            estimator: EstimatorConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.trim_frac.is_finite() && (0.0..0.5).contains(&self.trim_frac)) {
            return Err(Error::InvalidParameter(format!(
                "trim_frac {} outside [0, 0.5)",
                self.trim_frac
            )));
        }
        if !(self.faba_frac.is_finite() && (0.0..1.0).contains(&self.faba_frac)) {
            return Err(Error::InvalidParameter(format!(
                "faba_frac {} outside [0, 1)",
                self.faba_frac
            )));
        }
        self.estimator.validate()
    }
}

/// Round context the stateful and reference-based rules need.
#[derive(Debug, Clone, Copy)]
pub struct AggregationContext<'a> {
    /// Global model the contributors trained from this round.
    pub prior_global: &'a ParamVector,
    /// Reference update from the server's own data; required by the
    /// trust-scored rule.
    pub server_update: Option<&'a ParamVector>,
}

/// Cross-round state owned by one aggregation site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RuleState {
    Stateless,
    Foolsgold(FoolsGoldState),
    Flair(FlairState),
}

impl RuleState {
    pub fn new(cfg: &AggregatorConfig, num_models: usize, dim: usize) -> Self {
        match cfg.rule {
            RuleKind::Foolsgold => RuleState::Foolsgold(FoolsGoldState::new(num_models, dim)),
            RuleKind::Flair => RuleState::Flair(FlairState::new(num_models, dim)),
            _ => RuleState::Stateless,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationOutput {
    pub model: ParamVector,
    /// Per-(dimension, model) outlier flags; present only for the
    /// inconsistency-detecting rule.
    pub flags: Option<FlagMatrix>,
}

/// Applies the configured rule to one round's models at one site.
pub fn aggregate(
    cfg: &AggregatorConfig,
    models: &[ParamVector],
    ctx: &AggregationContext,
    state: &mut RuleState,
) -> Result<AggregationOutput> {
    cfg.validate()?;
    let mut flags = None;
    let model = match cfg.rule {
        RuleKind::Mean => mean_aggregate(models)?,
        RuleKind::Median => median_aggregate(models)?,
        RuleKind::Trim => trimmed_mean_aggregate(models, cfg.trim_frac)?,
        RuleKind::Krum => krum_aggregate(models, cfg.krum_f)?,
        RuleKind::Faba => faba_aggregate(models, cfg.faba_frac)?,
        RuleKind::Foolsgold => {
            let RuleState::Foolsgold(fg) = state else {
                return Err(Error::InvalidParameter(
                    "aggregation state does not match the foolsgold rule".into(),
                ));
            };
            let updates: Vec<ParamVector> = models
                .iter()
                .map(|m| m.sub(ctx.prior_global))
                .collect::<Result<_>>()?;
            fg.observe(&updates)?;
            foolsgold_aggregate(models, &fg.histories)?
        }
        RuleKind::Fltrust => {
            let server_update = ctx.server_update.ok_or_else(|| {
                Error::InvalidParameter("fltrust requires a server reference update".into())
            })?;
            fltrust_aggregate(models, ctx.prior_global, server_update)?
        }
        RuleKind::Flair => {
            let RuleState::Flair(fs) = state else {
                return Err(Error::InvalidParameter(
                    "aggregation state does not match the flair rule".into(),
                ));
            };
            flair_aggregate(models, ctx.prior_global, fs)?
        }
        RuleKind::Glid => {
            let (model, matrix) = glid_aggregate(models, &cfg.estimator)?;
            flags = Some(matrix);
            model
        }
    };
    model.check_finite("aggregated model")?;
    Ok(AggregationOutput { model, flags })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(values: &[f64]) -> ParamVector {
        ParamVector::new(values.to_vec())
    }

    fn run(rule: RuleKind, models: &[ParamVector]) -> AggregationOutput {
        let cfg = AggregatorConfig::new(rule);
        let prior = ParamVector::zeros(models[0].dim());
        let server = pv(&vec![1.0; models[0].dim()]);
        let ctx = AggregationContext {
            prior_global: &prior,
            server_update: Some(&server),
        };
        let mut state = RuleState::new(&cfg, models.len(), models[0].dim());
        aggregate(&cfg, models, &ctx, &mut state).unwrap()
    }

    #[test]
    fn every_rule_dispatches_on_a_consensus_set() {
        let m = pv(&[0.5, 0.25]);
        let models = vec![m.clone(), m.clone(), m.clone(), m.clone()];
        for rule in [
            RuleKind::Mean,
            RuleKind::Median,
            RuleKind::Trim,
            RuleKind::Krum,
            RuleKind::Foolsgold,
            RuleKind::Faba,
            RuleKind::Flair,
            RuleKind::Glid,
        ] {
            let out = run(rule, &models);
            assert_eq!(out.model, m, "{rule:?}");
            assert_eq!(out.flags.is_some(), rule == RuleKind::Glid);
        }
    }

    #[test]
    fn fltrust_requires_server_update() {
        let cfg = AggregatorConfig::new(RuleKind::Fltrust);
        let models = vec![pv(&[1.0]), pv(&[2.0])];
        let prior = pv(&[0.0]);
        let ctx = AggregationContext {
            prior_global: &prior,
            server_update: None,
        };
        let mut state = RuleState::new(&cfg, 2, 1);
        assert!(aggregate(&cfg, &models, &ctx, &mut state).is_err());
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let cfg = AggregatorConfig::new(RuleKind::Flair);
        let models = vec![pv(&[1.0]), pv(&[2.0])];
        let prior = pv(&[0.0]);
        let ctx = AggregationContext {
            prior_global: &prior,
            server_update: None,
        };
        let mut state = RuleState::Stateless;
        assert!(aggregate(&cfg, &models, &ctx, &mut state).is_err());
    }

    #[test]
    fn config_ranges_are_validated() {
        let mut cfg = AggregatorConfig::new(RuleKind::Mean);
        cfg.trim_frac = 0.5;
        assert!(cfg.validate().is_err());
        cfg.trim_frac = 0.2;
        cfg.faba_frac = 1.0;
        assert!(cfg.validate().is_err());
    }
}
