//! Model poisoning attacks. Each round the adversary, who controls a
//! fixed fraction of the population, submits `m` crafted parameter
//! vectors alongside the benign updates. The adversary sees only the
//! initial and current global models, never benign data or updates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::rng::derive;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Adaptive amplification of the gap between a base model and the
    /// current global model, with a halving step search on the factor.
    Fti,
    /// Pushes every coordinate against its own sign.
    Trim,
    /// Replays a scaled copy of the previous global model.
    History,
    /// Independent scaled Gaussian noise per fake.
    Random,
    /// Pulls the global model back toward its initial state.
    Mpaf,
    /// Reverses the most recent global update direction.
    Zheng,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Amplification used by the non-adaptive attacks.
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Initial amplification factor and step of the adaptive search.
    #[serde(default = "default_eta0")]
    pub eta0: f64,
    /// Extra entropy for the randomized attacks.
    #[serde(default)]
    pub seed: u64,
    /// Base model the adaptive attack amplifies away from; the initial
    /// global model when absent.
    #[serde(default)]
    pub fti_base: Option<Vec<f64>>,
    /// Adaptation passes per round for the adaptive attack. Values
    /// above 1 search against a frozen global model.
    #[serde(default = "default_fti_iterations")]
    pub fti_iterations: usize,
    /// Standard deviation of per-fake Gaussian jitter; zero keeps all
    /// fakes identical where the attack is deterministic.
    #[serde(default)]
    pub jitter_sd: f64,
}

fn default_scale() -> f64 {
    1000.0
}

fn default_eta0() -> f64 {
    10.0
}

fn default_fti_iterations() -> usize {
    1
}

impl AttackConfig {
    pub fn new(kind: AttackKind) -> Self {
        AttackConfig {
            kind,
            scale: default_scale(),
            eta0: default_eta0(),
            seed: 0,
            fti_base: None,
            fti_iterations: default_fti_iterations(),
            jitter_sd: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidParameter(
                "attack scale must be finite and positive".into(),
            ));
        }
        if !(self.eta0.is_finite() && self.eta0 > 0.0) {
            return Err(Error::InvalidParameter(
                "eta0 must be finite and positive".into(),
            ));
        }
        if self.fti_iterations == 0 {
            return Err(Error::InvalidParameter(
                "fti_iterations must be at least 1".into(),
            ));
        }
        if !(self.jitter_sd.is_finite() && self.jitter_sd >= 0.0) {
            return Err(Error::InvalidParameter(
                "jitter_sd must be finite and non-negative".into(),
            ));
        }
        if let Some(base) = &self.fti_base {
            if base.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "fti_base",
                });
            }
        }
        Ok(())
    }
}

/// Mutable state of the adaptive attack's step search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtiState {
    pub eta: f64,
    pub step: f64,
    /// Distance achieved last round; -1 before the first round.
    pub pre_dist: f64,
    /// Base model the fakes amplify away from.
    pub base_model: ParamVector,
    pub initial_eta: f64,
}

impl FtiState {
    pub fn new(eta0: f64, base_model: ParamVector) -> Self {
        FtiState {
            eta: eta0,
            step: eta0,
            pre_dist: -1.0,
            base_model,
            initial_eta: eta0,
        }
    }
}

/// Attack state carried across rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackState {
    pub fti: Option<FtiState>,
}

impl AttackState {
    /// `initial_global` becomes the adaptive attack's default base model.
    pub fn new(cfg: &AttackConfig, initial_global: &ParamVector) -> Self {
        AttackState {
            fti: (cfg.kind == AttackKind::Fti).then(|| {
                let base = match &cfg.fti_base {
                    Some(v) => ParamVector::new(v.clone()),
                    None => initial_global.clone(),
                };
                FtiState::new(cfg.eta0, base)
            }),
        }
    }
}

/// Everything the adversary observes in one round.
#[derive(Debug, Clone, Copy)]
pub struct AttackContext<'a> {
    pub round: usize,
    /// Current global model.
    pub global: &'a ParamVector,
    /// Global model from the previous round; equals the current one at
    /// round zero.
    pub prev_global: &'a ParamVector,
    /// Global model before any training.
    pub initial_global: &'a ParamVector,
    pub num_fakes: usize,
    /// Stream already folded with the scenario seed by the caller.
    pub seed: u64,
}

/// Number of fakes needed so they form fraction `p` of the combined
/// population of `n` benign models plus fakes: round(p n / (1 - p)).
pub fn num_fakes(num_benign: usize, fraction: f64) -> Result<usize> {
    if !(fraction.is_finite() && (0.0..1.0).contains(&fraction)) {
        return Err(Error::InvalidParameter(format!(
            "fake fraction {fraction} outside [0, 1)"
        )));
    }
    Ok((fraction * num_benign as f64 / (1.0 - fraction)).round() as usize)
}

/// One adaptation pass of the adaptive attack. Crafts the fake with
/// the current factor, measures its distance from the global model,
/// then moves the factor by half the step: up if the distance grew,
/// down otherwise. The step halves every pass.
pub fn fti_round(state: &FtiState, global: &ParamVector) -> Result<(ParamVector, FtiState)> {
    let fake = state.base_model.lin_comb(state.eta, global, 1.0 - state.eta)?;
    let dist = fake.l2_dist(global)?;
    let eta = if state.pre_dist < dist {
        state.eta + state.step / 2.0
    } else {
        state.eta - state.step / 2.0
    };
    Ok((
        fake,
        FtiState {
            eta,
            step: state.step / 2.0,
            pre_dist: dist,
            base_model: state.base_model.clone(),
            initial_eta: state.initial_eta,
        },
    ))
}

/// Pushes each coordinate of the global model against its own sign;
/// exactly-zero coordinates get a small fixed negative push.
pub fn trim_attack(global: &ParamVector, scale: f64) -> Result<ParamVector> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "trim attack scale {scale} must be positive"
        )));
    }
    Ok(ParamVector::new(
        global
            .values()
            .iter()
            .map(|&g| {
                if g == 0.0 {
                    -scale * 1e-3
                } else {
                    g - scale * g.signum() * g.abs()
                }
            })
            .collect(),
    ))
}

/// Scaled replay of the most recent previous global model.
pub fn history_attack(prev_global: &ParamVector, scale: f64) -> ParamVector {
    prev_global.scale(scale)
}

/// `m` independent scaled standard Gaussian vectors, deterministic per
/// (seed, fake index).
pub fn random_attack(dim: usize, scale: f64, seed: u64, m: usize) -> Vec<ParamVector> {
    (0..m)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, i as u64 + 1));
            gaussian_vector(dim, scale, &mut rng)
        })
        .collect()
}

/// Amplified step from the current global model back toward the
/// initial one.
pub fn mpaf_attack(initial: &ParamVector, global: &ParamVector, scale: f64) -> Result<ParamVector> {
    global.lin_comb(1.0, &initial.sub(global)?, scale)
}

/// Reversal of the most recent global update direction.
pub fn zheng_attack(
    prev_update: &ParamVector,
    global: &ParamVector,
    scale: f64,
) -> Result<ParamVector> {
    global.lin_comb(1.0, prev_update, -scale)
}

fn gaussian_vector(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> ParamVector {
    ParamVector::new(
        (0..dim)
            .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect(),
    )
}

const JITTER_TAG: u64 = 0x4a49_5454;
const RANDOM_TAG: u64 = 0x524e_444d;

/// Crafts this round's fake models, updating `state` in place. The
/// result is empty when `num_fakes` is zero.
pub fn craft_fakes(
    cfg: &AttackConfig,
    ctx: &AttackContext,
    state: &mut AttackState,
) -> Result<Vec<ParamVector>> {
    cfg.validate()?;
    if ctx.num_fakes == 0 {
        return Ok(Vec::new());
    }
    let dim = ctx.global.dim();
    ctx.global.check_finite("global model")?;

    let mut fakes: Vec<ParamVector> = match cfg.kind {
        AttackKind::Fti => {
            let mut fti = state
                .fti
                .clone()
                .unwrap_or_else(|| FtiState::new(cfg.eta0, ctx.initial_global.clone()));
            let mut fake = ctx.global.clone();
            for _ in 0..cfg.fti_iterations {
                let (crafted, next) = fti_round(&fti, ctx.global)?;
                fake = crafted;
                fti = next;
            }
            state.fti = Some(fti);
            vec![fake; ctx.num_fakes]
        }
        AttackKind::Trim => vec![trim_attack(ctx.global, cfg.scale)?; ctx.num_fakes],
        AttackKind::History => vec![history_attack(ctx.prev_global, cfg.scale); ctx.num_fakes],
        AttackKind::Random => random_attack(
            dim,
            cfg.scale,
            derive(ctx.seed ^ RANDOM_TAG, ctx.round as u64 + 1),
            ctx.num_fakes,
        ),
        AttackKind::Mpaf => {
            vec![mpaf_attack(ctx.initial_global, ctx.global, cfg.scale)?; ctx.num_fakes]
        }
        AttackKind::Zheng => {
            let delta = ctx.global.sub(ctx.prev_global)?;
            vec![zheng_attack(&delta, ctx.global, cfg.scale)?; ctx.num_fakes]
        }
    };

    if cfg.jitter_sd > 0.0 {
        for (i, fake) in fakes.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(
                derive(ctx.seed ^ JITTER_TAG, ctx.round as u64 + 1),
                i as u64 + 1,
            ));
            let noise = gaussian_vector(dim, cfg.jitter_sd, &mut rng);
            *fake = fake.add(&noise)?;
        }
    }
    for fake in &fakes {
        fake.check_finite("crafted fake model")?;
    }
    Ok(fakes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx<'a>(
        global: &'a ParamVector,
        prev: &'a ParamVector,
        initial: &'a ParamVector,
        m: usize,
    ) -> AttackContext<'a> {
        AttackContext {
            round: 0,
            global,
            prev_global: prev,
            initial_global: initial,
            num_fakes: m,
            seed: 42,
        }
    }

    #[test]
    fn fti_single_pass_matches_hand_trace() {
        let state = FtiState {
            eta: 2.0,
            step: 10.0,
            pre_dist: -1.0,
            base_model: ParamVector::new(vec![1.0, 1.0]),
            initial_eta: 2.0,
        };
        let global = ParamVector::new(vec![0.0, 0.0]);
        let (fake, next) = fti_round(&state, &global).unwrap();
        assert_eq!(fake.values(), &[2.0, 2.0]);
        let dist = (8.0f64).sqrt();
        assert!((next.pre_dist - dist).abs() < 1e-12);
        assert_eq!(next.eta, 7.0);
        assert_eq!(next.step, 5.0);
    }

    #[test]
    fn fti_with_unit_factor_emits_base_model() {
        let state = FtiState::new(1.0, ParamVector::new(vec![3.0, -2.0]));
        let global = ParamVector::new(vec![9.0, 9.0]);
        let (fake, _) = fti_round(&state, &global).unwrap();
        assert_eq!(fake.values(), &[3.0, -2.0]);
    }

    #[test]
    fn fti_collapses_when_base_equals_global() {
        let global = ParamVector::new(vec![4.0, 5.0]);
        let state = FtiState {
            eta: 123.0,
            step: 1.0,
            pre_dist: -1.0,
            base_model: global.clone(),
            initial_eta: 123.0,
        };
        let (fake, _) = fti_round(&state, &global).unwrap();
        assert_eq!(fake, global);
    }

    #[test]
    fn fti_factor_shrinks_when_distance_shrinks() {
        let state = FtiState {
            eta: 2.0,
            step: 4.0,
            pre_dist: 100.0,
            base_model: ParamVector::new(vec![1.0]),
            initial_eta: 2.0,
        };
        let global = ParamVector::new(vec![0.0]);
        let (_, next) = fti_round(&state, &global).unwrap();
        assert_eq!(next.eta, 0.0);
        assert_eq!(next.step, 2.0);
    }

    #[test]
    fn fti_distance_is_factor_times_gap() {
        let state = FtiState::new(3.0, ParamVector::new(vec![2.0, 0.0]));
        let global = ParamVector::new(vec![0.0, 0.0]);
        let (fake, next) = fti_round(&state, &global).unwrap();
        let gap = state.base_model.l2_dist(&global).unwrap();
        assert!((next.pre_dist - state.eta * gap).abs() < 1e-12);
        assert!((fake.l2_dist(&global).unwrap() - next.pre_dist).abs() < 1e-12);
    }

    #[test]
    fn fti_step_halves_exactly_and_factor_stays_bounded() {
        let cfg = AttackConfig::new(AttackKind::Fti);
        let global = ParamVector::new(vec![0.0, 0.0]);
        let initial = ParamVector::new(vec![1.0, 2.0]);
        let mut state = AttackState::new(&cfg, &initial);
        for r in 0..20 {
            let mut c = ctx(&global, &global, &initial, 3);
            c.round = r;
            let fakes = craft_fakes(&cfg, &c, &mut state).unwrap();
            assert_eq!(fakes.len(), 3);
            assert_eq!(fakes[0], fakes[2]);
            let fti = state.fti.as_ref().unwrap();
            assert_eq!(fti.step, 10.0 / 2f64.powi(r as i32 + 1));
            assert!((fti.eta - 10.0).abs() <= 10.0 + 1e-12);
        }
    }

    #[test]
    fn fti_factor_never_decreases_against_fixed_global() {
        let cfg = AttackConfig::new(AttackKind::Fti);
        let global = ParamVector::new(vec![0.0]);
        let initial = ParamVector::new(vec![1.0]);
        let mut state = AttackState::new(&cfg, &initial);
        let mut last_eta = cfg.eta0;
        for r in 0..30 {
            let mut c = ctx(&global, &global, &initial, 1);
            c.round = r;
            craft_fakes(&cfg, &c, &mut state).unwrap();
            let eta = state.fti.as_ref().unwrap().eta;
            assert!(eta >= last_eta);
            last_eta = eta;
        }
    }

    #[test]
    fn trim_flips_against_coordinate_signs() {
        let global = ParamVector::new(vec![1.0, -1.0]);
        let fake = trim_attack(&global, 2.0).unwrap();
        assert_eq!(fake.values(), &[-1.0, 1.0]);

        let zeros = ParamVector::new(vec![0.0, 0.0]);
        let fake = trim_attack(&zeros, 2.0).unwrap();
        assert_eq!(fake.values(), &[-2e-3, -2e-3]);

        assert!(trim_attack(&global, 0.0).is_err());
    }

    #[test]
    fn history_replays_scaled_previous_global() {
        let prev = ParamVector::new(vec![0.001, 0.0]);
        assert_eq!(history_attack(&prev, 1000.0).values(), &[1.0, 0.0]);
        assert_eq!(history_attack(&prev, 1.0), prev);
    }

    #[test]
    fn random_attack_is_deterministic_with_independent_fakes() {
        let a = random_attack(4, 2.0, 7, 3);
        let b = random_attack(4, 2.0, 7, 3);
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);

        let zero = random_attack(4, 0.0, 7, 1);
        assert_eq!(zero[0].values(), &[0.0; 4]);
    }

    #[test]
    fn random_attack_unit_scale_has_unit_spread() {
        let fakes = random_attack(1, 1.0, 11, 10_000);
        let vals: Vec<f64> = fakes.iter().map(|f| f[0]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd =
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        assert!((sd - 1.0).abs() < 0.05, "sd {sd}");
    }

    #[test]
    fn mpaf_points_back_at_initial_model() {
        let initial = ParamVector::new(vec![0.0]);
        let global = ParamVector::new(vec![1.0]);
        assert_eq!(mpaf_attack(&initial, &global, 1000.0).unwrap().values(), &[-999.0]);
        assert_eq!(mpaf_attack(&initial, &global, 1.0).unwrap(), initial);
        assert_eq!(mpaf_attack(&global, &global, 55.0).unwrap(), global);
    }

    #[test]
    fn zheng_reverses_last_update() {
        let global = ParamVector::new(vec![1.0]);
        let delta = ParamVector::new(vec![0.1]);
        assert_eq!(zheng_attack(&delta, &global, 10.0).unwrap().values(), &[0.0]);

        let zero = ParamVector::new(vec![0.0]);
        assert_eq!(zheng_attack(&zero, &global, 10.0).unwrap(), global);
        assert_eq!(zheng_attack(&delta, &global, 0.0).unwrap(), global);
    }

    #[test]
    fn crafted_zheng_uses_global_gap_and_idles_at_round_zero() {
        let cfg = AttackConfig {
            scale: 10.0,
            ..AttackConfig::new(AttackKind::Zheng)
        };
        let global = ParamVector::new(vec![5.0]);
        let prev = ParamVector::new(vec![3.0]);
        let mut state = AttackState::new(&cfg, &prev);
        let fakes = craft_fakes(&cfg, &ctx(&global, &prev, &prev, 1), &mut state).unwrap();
        assert_eq!(fakes[0].values(), &[5.0 - 10.0 * 2.0]);

        let fakes = craft_fakes(&cfg, &ctx(&global, &global, &prev, 1), &mut state).unwrap();
        assert_eq!(fakes[0].values(), &[5.0]);
    }

    #[test]
    fn random_fakes_vary_per_round_through_craft() {
        let cfg = AttackConfig::new(AttackKind::Random);
        let global = ParamVector::new(vec![0.0; 4]);
        let mut state = AttackState::new(&cfg, &global);
        let c0 = ctx(&global, &global, &global, 2);
        let mut c1 = c0;
        c1.round = 1;
        let a = craft_fakes(&cfg, &c0, &mut state).unwrap();
        let b = craft_fakes(&cfg, &c1, &mut state).unwrap();
        assert_ne!(a[0], b[0]);
    }

    #[test]
    fn jitter_perturbs_fakes_deterministically() {
        let cfg = AttackConfig {
            scale: 1.0,
            jitter_sd: 0.5,
            ..AttackConfig::new(AttackKind::Mpaf)
        };
        let global = ParamVector::new(vec![4.0, 2.0]);
        let initial = ParamVector::new(vec![0.0, 0.0]);
        let mut state = AttackState::new(&cfg, &initial);
        let c = ctx(&global, &global, &initial, 2);
        let a = craft_fakes(&cfg, &c, &mut state).unwrap();
        let b = craft_fakes(&cfg, &c, &mut state).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        assert_ne!(a[0].values(), &[0.0, 0.0]);
    }

    #[test]
    fn custom_base_model_overrides_initial_global() {
        let cfg = AttackConfig {
            fti_base: Some(vec![5.0]),
            ..AttackConfig::new(AttackKind::Fti)
        };
        let initial = ParamVector::new(vec![1.0]);
        let state = AttackState::new(&cfg, &initial);
        assert_eq!(state.fti.unwrap().base_model.values(), &[5.0]);
    }

    #[test]
    fn zero_fakes_produce_nothing() {
        let global = ParamVector::new(vec![1.0]);
        let cfg = AttackConfig::new(AttackKind::Trim);
        let mut state = AttackState::new(&cfg, &global);
        let fakes = craft_fakes(&cfg, &ctx(&global, &global, &global, 0), &mut state).unwrap();
        assert!(fakes.is_empty());
    }

    #[test]
    fn fake_count_follows_population_fraction() {
        assert_eq!(num_fakes(80, 0.2).unwrap(), 20);
        assert_eq!(num_fakes(80, 0.0).unwrap(), 0);
        assert_eq!(num_fakes(80, 0.1).unwrap(), 9);
        assert_eq!(num_fakes(10, 0.5).unwrap(), 10);
        assert!(num_fakes(10, 1.0).is_err());
        assert!(num_fakes(10, -0.1).is_err());
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let mut cfg = AttackConfig::new(AttackKind::Fti);
        cfg.scale = 0.0;
        assert!(cfg.validate().is_err());
        cfg.scale = 1000.0;
        cfg.eta0 = 0.0;
        assert!(cfg.validate().is_err());
        cfg.eta0 = 10.0;
        cfg.fti_iterations = 0;
        assert!(cfg.validate().is_err());
        cfg.fti_iterations = 1;
        cfg.jitter_sd = -1.0;
        assert!(cfg.validate().is_err());
        cfg.jitter_sd = 0.0;
        cfg.fti_base = Some(vec![f64::NAN]);
        assert!(cfg.validate().is_err());
    }
}
