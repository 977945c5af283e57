//! The round loop: local training, fake injection, tiered
//! aggregation, broadcast, and per-round measurement.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{
    aggregate, mean_aggregate, AggregationContext, AggregatorConfig, FlagMatrix, RuleKind,
    RuleState,
};
use crate::attack::{craft_fakes, AttackConfig, AttackContext, AttackState};
use crate::clustering::{
    affinity_matrix, cluster, load_attributes_csv, synth_attributes, NodeAttributes,
};
use crate::data::{ingest_csv, standardize, synth_generate, SynthSpec};
use crate::error::{Error, Result};
use crate::model::{evaluate, local_update};
use crate::params::ParamVector;
use crate::rng::{derive, derive3, stream};
use crate::scenario::{
    DataConfig, FakePlacement, ScenarioConfig, SynthParams, TierOfDefense,
    TRAIN_FRACTION,
};
use crate::series::{build_samples, SampleSet, TrafficSeries};

/// Size of the trust rule's server-side clean dataset.
const ROOT_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    V,
    H,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::V => "v",
            Stage::H => "h",
        })
    }
}

/// One round's measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub stage: Stage,
    pub global_mae: f64,
    pub global_mse: f64,
    /// Adaptive attack's scaling factor after this round's crafting.
    pub eta: Option<f64>,
    /// Dimensions flagged per contributor (benign NDTs first, then
    /// fakes); all zeros unless the flag-producing rule ran at the
    /// NDT-facing tier.
    pub flags_per_ndt: Vec<u32>,
    /// Per-cluster mean squared deviation from the global model in
    /// force when the cluster models formed; empty in flat mode.
    pub cluster_deviations: Vec<f64>,
    /// Cluster refreshed by this step; present only in clustered
    /// asynchronous steps.
    pub refreshed_cluster: Option<usize>,
    /// Whether the global model changed this round.
    pub global_updated: bool,
}

/// Final summary, self-describing via the config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ScenarioConfig,
    pub num_benign: usize,
    pub num_fakes: usize,
    /// Benign NDTs per cluster; a single entry in flat mode.
    pub cluster_sizes: Vec<usize>,
    /// Cluster each fake attached to; empty in flat mode.
    pub fake_clusters: Vec<usize>,
    pub rounds_completed: usize,
    pub final_mae: f64,
    pub final_mse: f64,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub records: Vec<RoundRecord>,
    pub report: ExperimentReport,
    /// Global model after the last round.
    pub final_global: ParamVector,
}

/// Mean squared per-dimension deviation between two models, the
/// scalar an asynchronous refresh compares against its threshold.
pub fn cluster_epsilon(cluster_model: &ParamVector, global: &ParamVector) -> Result<f64> {
    let dist = cluster_model.l2_dist(global)?;
    Ok(dist * dist / cluster_model.dim() as f64)
}

/// One NDT's prepared data.
struct Station {
    train: SampleSet,
    test: SampleSet,
}

/// One aggregation pool: a cluster, or the whole population in flat
/// mode. Member order is always benign indices then fake indices.
struct Site {
    benign: Vec<usize>,
    fakes: Vec<usize>,
    state: RuleState,
    model: ParamVector,
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    stations: Vec<Station>,
    sites: Vec<Site>,
    site_rule: AggregatorConfig,
    global_rule: Option<(AggregatorConfig, RuleState)>,
    global: ParamVector,
    prev_global: ParamVector,
    initial: ParamVector,
    attack: Option<AttackDriver>,
    root: Option<RootTrainer>,
    schedule: Vec<usize>,
    flat: bool,
    total_fakes: usize,
    fake_sites: Vec<usize>,
    labels: Vec<usize>,
    attrs: Vec<NodeAttributes>,
    tick: usize,
}

struct AttackDriver {
    cfg: AttackConfig,
    state: AttackState,
    /// Scenario seed folded with the attack stream and attack seed.
    seed: u64,
}

/// Server-side clean data for the trust-scored rule.
struct RootTrainer {
    samples: SampleSet,
    seed: u64,
}

impl RootTrainer {
    fn delta(&self, cfg: &ScenarioConfig, global: &ParamVector, tick: usize) -> Result<ParamVector> {
        let updated = local_update(
            global,
            &cfg.predictor,
            &self.samples,
            derive(self.seed, tick as u64 + 1),
        )?;
        updated.sub(global)
    }
}

/// Runs the full scenario: data preparation, clustering, synchronous
/// initialization rounds, then threshold-gated asynchronous steps.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<ExperimentOutcome> {
    let started = Instant::now();
    cfg.validate()?;

    let stations = prepare_stations(cfg)?;
    let initial = cfg
        .predictor
        .init_params(cfg.window.input_dim(), derive(cfg.seed, stream::INIT));
    let mut engine = Engine::new(cfg, stations, initial)?;

    let mut records = Vec::with_capacity(cfg.rounds_v + cfg.rounds_h);
    for _ in 0..cfg.rounds_v {
        engine.maybe_recluster()?;
        records.push(engine.run_round(Stage::V, None)?);
    }
    for step in 0..cfg.rounds_h {
        engine.maybe_recluster()?;
        let refresh = engine.next_refresh(step);
        records.push(engine.run_round(Stage::H, refresh)?);
    }

    let (final_mae, final_mse) = match records.last() {
        Some(r) => (r.global_mae, r.global_mse),
        None => engine.evaluate_global()?,
    };
    let report = ExperimentReport {
        config: cfg.clone(),
        num_benign: cfg.num_benign,
        num_fakes: engine.total_fakes,
        cluster_sizes: engine.sites.iter().map(|s| s.benign.len()).collect(),
        fake_clusters: if engine.flat {
            Vec::new()
        } else {
            engine.fake_sites.clone()
        },
        rounds_completed: records.len(),
        final_mae,
        final_mse,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(ExperimentOutcome {
        records,
        report,
        final_global: engine.global,
    })
}

fn prepare_stations(cfg: &ScenarioConfig) -> Result<Vec<Station>> {
    let series_map = match &cfg.data {
        DataConfig::Synth(params) => {
            synth_generate(&params.to_spec(cfg.num_benign, derive(cfg.seed, stream::DATA)))?
        }
        DataConfig::Csv(csv) => ingest_csv(&csv.path, csv.interval_seconds, &csv.schema)?,
    };
    if series_map.len() != cfg.num_benign {
        return Err(Error::InvalidConfig(format!(
            "data source yields {} series, scenario expects num_benign = {}",
            series_map.len(),
            cfg.num_benign
        )));
    }
    let series: Vec<TrafficSeries> = series_map.into_values().collect();
    series
        .par_iter()
        .map(|s| prepare_station(s, cfg))
        .collect()
}

fn prepare_station(series: &TrafficSeries, cfg: &ScenarioConfig) -> Result<Station> {
    // Normalization stats come from the chronological training prefix.
    let train_len = ((series.len() as f64) * TRAIN_FRACTION).floor() as usize;
    let (normalized, _, _) = standardize(series, train_len.clamp(2, series.len()))?;
    let samples = build_samples(&normalized, &cfg.window)?;
    let (train, test) = samples.split(TRAIN_FRACTION);
    if train.is_empty() || test.is_empty() {
        return Err(Error::SeriesTooShort {
            id: series.ndt_id.clone(),
            len: series.len(),
            min: cfg.window.min_series_len() + 1,
        });
    }
    Ok(Station { train, test })
}

fn build_root_trainer(cfg: &ScenarioConfig) -> Result<RootTrainer> {
    let params = match &cfg.data {
        DataConfig::Synth(p) => p.clone(),
        DataConfig::Csv(_) => SynthParams::default(),
    };
    let lookback = cfg.window.min_series_len() - 1;
    let spec = SynthSpec {
        num_ndts: 1,
        length: (lookback + ROOT_SAMPLES).max(2 * params.daily_period),
        daily_period: params.daily_period,
        base: params.base,
        amplitude: params.amplitude,
        noise_sd: params.noise_sd,
        heterogeneity: 0.0,
        seed: derive(cfg.seed, stream::ROOT_DATA),
        interval_seconds: params.interval_seconds,
    };
    let series = synth_generate(&spec)?
        .into_values()
        .next()
        .expect("spec yields one series");
    let (normalized, _, _) = standardize(&series, series.len())?;
    let samples = build_samples(&normalized, &cfg.window)?;
    let keep = samples.len().min(ROOT_SAMPLES);
    let inputs = (0..keep).map(|i| samples.input(i).to_vec()).collect();
    let targets = (0..keep).map(|i| samples.target(i)).collect();
    Ok(RootTrainer {
        samples: SampleSet::new(inputs, targets),
        seed: derive(cfg.seed, stream::ROOT_DATA),
    })
}

fn place_fakes(
    placement: FakePlacement,
    num_sites: usize,
    count: usize,
    seed: u64,
) -> Vec<usize> {
    match placement {
        FakePlacement::SingleCluster => vec![0; count],
        FakePlacement::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count).map(|_| rng.gen_range(0..num_sites)).collect()
        }
    }
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ScenarioConfig, stations: Vec<Station>, initial: ParamVector) -> Result<Self> {
        let n = stations.len();
        let total_fakes = cfg.num_fakes()?;
        let flat = cfg.clusters.is_flat();

        let (labels, num_sites, attrs) = if flat {
            (vec![0; n], 1, Vec::new())
        } else {
            let c = cfg.clusters.count().expect("validated cluster count");
            let attrs = match &cfg.attributes {
                Some(path) => {
                    let loaded = load_attributes_csv(path)?;
                    if loaded.len() != n {
                        return Err(Error::InvalidConfig(format!(
                            "attributes file lists {} nodes, scenario has {n}",
                            loaded.len()
                        )));
                    }
                    loaded
                }
                None => synth_attributes(n, derive(cfg.seed, stream::ATTRS)),
            };
            let affinities = affinity_matrix(&attrs, &cfg.affinity)?;
            let assignment = cluster(&affinities, c)?;
            (assignment.labels, assignment.num_clusters, attrs)
        };

        let fake_sites = if flat {
            vec![0; total_fakes]
        } else {
            place_fakes(
                cfg.placement,
                num_sites,
                total_fakes,
                derive(cfg.seed, stream::PLACEMENT),
            )
        };

        let mean_rule = AggregatorConfig::new(RuleKind::Mean);
        let (site_rule, global_rule_cfg) = if flat {
            (cfg.defense, None)
        } else {
            match cfg.tier_of_defense {
                TierOfDefense::Cluster => (cfg.defense, None),
                TierOfDefense::Global => (mean_rule, Some(cfg.defense)),
                TierOfDefense::Both => (cfg.defense, Some(cfg.defense)),
            }
        };

        let dim = initial.dim();
        let sites = build_sites(&labels, &fake_sites, num_sites, &site_rule, &initial, dim);
        let global_rule =
            global_rule_cfg.map(|rule| (rule, RuleState::new(&rule, num_sites, dim)));

        let mut schedule: Vec<usize> = (0..num_sites).collect();
        if !flat {
            schedule.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(
                cfg.seed,
                stream::SCHEDULE,
            )));
        }

        let attack = match &cfg.attack {
            Some(acfg) if total_fakes > 0 => Some(AttackDriver {
                cfg: acfg.clone(),
                state: AttackState::new(acfg, &initial),
                seed: derive(derive(cfg.seed, stream::ATTACK), acfg.seed),
            }),
            _ => None,
        };

        let uses_fltrust = site_rule.rule == RuleKind::Fltrust
            || global_rule
                .as_ref()
                .is_some_and(|(rule, _)| rule.rule == RuleKind::Fltrust);
        let root = if uses_fltrust {
            Some(build_root_trainer(cfg)?)
        } else {
            None
        };

        Ok(Engine {
            cfg,
            stations,
            sites,
            site_rule,
            global_rule,
            prev_global: initial.clone(),
            global: initial.clone(),
            initial,
            attack,
            root,
            schedule,
            flat,
            total_fakes,
            fake_sites,
            labels,
            attrs,
            tick: 0,
        })
    }

    /// Cluster to refresh at asynchronous step `step`; flat mode keeps
    /// synchronous rounds.
    fn next_refresh(&self, step: usize) -> Option<usize> {
        if self.flat {
            None
        } else {
            Some(self.schedule[step % self.schedule.len()])
        }
    }

    /// Re-runs clustering on schedule; membership changes rebuild the
    /// affected aggregation state.
    fn maybe_recluster(&mut self) -> Result<()> {
        let every = self.cfg.recluster_every_rounds;
        if self.flat || every == 0 || self.tick == 0 || self.tick % every != 0 {
            return Ok(());
        }
        let affinities = affinity_matrix(&self.attrs, &self.cfg.affinity)?;
        let assignment = cluster(&affinities, self.sites.len())?;
        if assignment.labels == self.labels {
            return Ok(());
        }
        self.labels = assignment.labels;
        self.fake_sites = place_fakes(
            self.cfg.placement,
            self.sites.len(),
            self.total_fakes,
            derive3(self.cfg.seed, stream::PLACEMENT, self.tick as u64, 1),
        );
        let dim = self.global.dim();
        self.sites = build_sites(
            &self.labels,
            &self.fake_sites,
            self.sites.len(),
            &self.site_rule,
            &self.global,
            dim,
        );
        Ok(())
    }

    fn uses_fltrust(&self) -> bool {
        self.site_rule.rule == RuleKind::Fltrust
            || self
                .global_rule
                .as_ref()
                .is_some_and(|(rule, _)| rule.rule == RuleKind::Fltrust)
    }

    fn run_round(&mut self, stage: Stage, refresh: Option<usize>) -> Result<RoundRecord> {
        let tick = self.tick;
        let start_global = self.global.clone();
        let n = self.stations.len();

        // Step I: participating benign NDTs train locally, in parallel.
        let participants: Vec<usize> = match refresh {
            None => (0..n).collect(),
            Some(c) => self.sites[c].benign.clone(),
        };
        let trained: Vec<ParamVector> = participants
            .par_iter()
            .map(|&i| {
                local_update(
                    &start_global,
                    &self.cfg.predictor,
                    &self.stations[i].train,
                    derive3(self.cfg.seed, stream::LOCAL, i as u64, tick as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut locals: Vec<Option<ParamVector>> = vec![None; n];
        for (&i, model) in participants.iter().zip(trained) {
            locals[i] = Some(model);
        }

        // Step II: the adversary crafts fakes for the refreshing pool.
        let fake_models: Vec<ParamVector> = match &mut self.attack {
            Some(driver) => {
                let count = match refresh {
                    None => self.total_fakes,
                    Some(c) => self.sites[c].fakes.len(),
                };
                if count > 0 {
                    let ctx = AttackContext {
                        round: tick,
                        global: &start_global,
                        prev_global: &self.prev_global,
                        initial_global: &self.initial,
                        num_fakes: count,
                        seed: driver.seed,
                    };
                    craft_fakes(&driver.cfg, &ctx, &mut driver.state)?
                } else {
                    Vec::new()
                }
            }
            None => Vec::new(),
        };

        // Step III: refresh pools, then combine into the global model.
        let root_delta = match &self.root {
            Some(root) if self.uses_fltrust() => {
                Some(root.delta(self.cfg, &start_global, tick)?)
            }
            _ => None,
        };
        let mut flags_per_ndt = vec![0u32; n + self.total_fakes];
        let site_ids: Vec<usize> = match refresh {
            None => (0..self.sites.len()).collect(),
            Some(c) => vec![c],
        };
        let site_rule = self.site_rule;
        for &sid in &site_ids {
            let mut models: Vec<ParamVector> = Vec::new();
            for &b in &self.sites[sid].benign {
                models.push(locals[b].clone().expect("participant trained"));
            }
            match refresh {
                None => {
                    for &f in &self.sites[sid].fakes {
                        models.push(fake_models[f].clone());
                    }
                }
                Some(_) => models.extend(fake_models.iter().cloned()),
            }
            let ctx = AggregationContext {
                prior_global: &start_global,
                server_update: root_delta.as_ref(),
            };
            let site = &mut self.sites[sid];
            let out = aggregate(&site_rule, &models, &ctx, &mut site.state)?;
            if let Some(flags) = &out.flags {
                for (pos, &b) in site.benign.iter().enumerate() {
                    flags_per_ndt[b] = flags.count_for_model(pos);
                }
                for (k, &f) in site.fakes.iter().enumerate() {
                    flags_per_ndt[n + f] = flags.count_for_model(site.benign.len() + k);
                }
            }
            site.model = out.model;
        }

        let cluster_deviations: Vec<f64> = if self.flat {
            Vec::new()
        } else {
            self.sites
                .iter()
                .map(|s| cluster_epsilon(&s.model, &start_global))
                .collect::<Result<_>>()?
        };

        let global_updated = match refresh {
            None => {
                self.global = self.combine(&start_global, root_delta.as_ref())?;
                true
            }
            Some(c) => {
                // Strict threshold: deviation at or below psi keeps the
                // current global model.
                if cluster_deviations[c] > self.cfg.psi {
                    self.global = self.combine(&start_global, root_delta.as_ref())?;
                    true
                } else {
                    false
                }
            }
        };
        self.prev_global = start_global;
        self.tick += 1;

        // Step IV is implicit: every NDT reads self.global next round.
        let (global_mae, global_mse) = self.evaluate_global()?;

        Ok(RoundRecord {
            round: tick,
            stage,
            global_mae,
            global_mse,
            eta: self
                .attack
                .as_ref()
                .and_then(|d| d.state.fti.as_ref())
                .map(|f| f.eta),
            flags_per_ndt,
            cluster_deviations,
            refreshed_cluster: refresh,
            global_updated,
        })
    }

    /// Combines current cluster models into a global candidate: the
    /// unweighted mean unless a global-tier rule is configured.
    fn combine(
        &mut self,
        prior: &ParamVector,
        root_delta: Option<&ParamVector>,
    ) -> Result<ParamVector> {
        let models: Vec<ParamVector> = self.sites.iter().map(|s| s.model.clone()).collect();
        match &mut self.global_rule {
            None => mean_aggregate(&models),
            Some((rule, state)) => {
                let ctx = AggregationContext {
                    prior_global: prior,
                    server_update: root_delta,
                };
                let out = aggregate(rule, &models, &ctx, state)?;
                // Flags here would describe clusters, not NDTs; the
                // per-NDT matrix only reports NDT-facing tiers.
                let _: Option<FlagMatrix> = out.flags;
                Ok(out.model)
            }
        }
    }

    /// MAE and MSE of the current global model, averaged over the
    /// benign NDTs' test splits with the cap applied per NDT.
    fn evaluate_global(&self) -> Result<(f64, f64)> {
        let metrics: Vec<(f64, f64)> = self
            .stations
            .par_iter()
            .map(|st| evaluate(&self.global, &self.cfg.predictor, &st.test, self.cfg.cap))
            .collect::<Result<Vec<_>>>()?;
        let count = metrics.len() as f64;
        let (mae_sum, mse_sum) = metrics
            .iter()
            .fold((0.0, 0.0), |(a, s), (mae, mse)| (a + mae, s + mse));
        Ok((mae_sum / count, mse_sum / count))
    }
}

fn build_sites(
    labels: &[usize],
    fake_sites: &[usize],
    num_sites: usize,
    rule: &AggregatorConfig,
    model: &ParamVector,
    dim: usize,
) -> Vec<Site> {
    (0..num_sites)
        .map(|s| {
            let benign: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == s)
                .map(|(i, _)| i)
                .collect();
            let fakes: Vec<usize> = fake_sites
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == s)
                .map(|(j, _)| j)
                .collect();
            let members = benign.len() + fakes.len();
            Site {
                benign,
                fakes,
                state: RuleState::new(rule, members, dim),
                model: model.clone(),
            }
        })
        .collect()
}
