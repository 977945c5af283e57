//! Prints the attack/defense outcome matrix at desk scale: final
//! capped errors for every combination, plus the fake-fraction,
//! eta0, and percentile-pair sweeps that frame the defense story.
//!
//! Sections can be selected by name (`matrix`, `pfrac`, `eta0`,
//! `pairs`); with no arguments all of them run. `SEEDS` and `LR`
//! environment variables override the seed count and learning rate.

use std::collections::BTreeMap;

use ndtsim_core::aggregate::{AggregatorConfig, EstimatorKind, PercentilePair, RuleKind};
use ndtsim_core::attack::{AttackConfig, AttackKind};
use ndtsim_core::model::{PredictorConfig, PredictorKind};
use ndtsim_core::orchestrator::run_experiment;
use ndtsim_core::scenario::ScenarioConfig;
use ndtsim_core::series::WindowSpec;

fn env_or<T: std::str::FromStr>(key: &str, fallback: T) -> T {
    std::env::var(key)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(fallback)
}

fn base_scenario(seed: u64, lr: f64) -> ScenarioConfig {
    let mut synth = ndtsim_core::scenario::SynthParams::default();
    synth.noise_sd = env_or("NOISE", synth.noise_sd);
    synth.heterogeneity = env_or("HET", synth.heterogeneity);
    ScenarioConfig {
        num_benign: 80,
        fake_fraction: 0.0,
        rounds_v: 30,
        rounds_h: 20,
        window: WindowSpec {
            recent: 6,
            cyclic: 1,
            period: 48,
        },
        predictor: PredictorConfig {
            kind: PredictorKind::Linear,
            hidden: vec![],
            lr,
            batch: 64,
            local_epochs: 1,
        },
        attack: None,
        defense: AggregatorConfig::new(RuleKind::Mean),
        clusters: ndtsim_core::scenario::ClusterMode::flat(),
        psi: 1e-4,
        cap: 100.0,
        tier_of_defense: Default::default(),
        seed,
        data: ndtsim_core::scenario::DataConfig::Synth(synth),
        placement: Default::default(),
        recluster_every_rounds: 0,
        affinity: Default::default(),
        attributes: None,
    }
}

fn defense(rule: RuleKind) -> AggregatorConfig {
    AggregatorConfig::new(rule)
}

fn glid_fixed(lo: f64, hi: f64) -> AggregatorConfig {
    let mut cfg = AggregatorConfig::new(RuleKind::Glid);
    cfg.estimator.method = EstimatorKind::Fixed;
    cfg.estimator.fixed_pair = PercentilePair::new(lo, hi).unwrap();
    cfg
}

#[derive(Clone, Copy)]
struct Cell {
    mae: f64,
    mse: f64,
}

fn run_cell(
    seeds: u64,
    lr: f64,
    attack: Option<AttackConfig>,
    fake_fraction: f64,
    def: AggregatorConfig,
) -> Cell {
    let mut mae = 0.0;
    let mut mse = 0.0;
    for seed in 0..seeds {
        let mut cfg = base_scenario(seed, lr);
        cfg.attack = attack.clone();
        cfg.fake_fraction = if attack.is_some() { fake_fraction } else { 0.0 };
        cfg.defense = def;
        let outcome = run_experiment(&cfg).expect("run failed");
        mae += outcome.report.final_mae;
        mse += outcome.report.final_mse;
    }
    Cell {
        mae: mae / seeds as f64,
        mse: mse / seeds as f64,
    }
}

fn attack_named(kind: AttackKind) -> AttackConfig {
    AttackConfig::new(kind)
}

const ATTACK_NAMES: [(&str, AttackKind); 6] = [
    ("fti", AttackKind::Fti),
    ("trim", AttackKind::Trim),
    ("history", AttackKind::History),
    ("random", AttackKind::Random),
    ("mpaf", AttackKind::Mpaf),
    ("zheng", AttackKind::Zheng),
];

const DEFENSE_NAMES: [(&str, RuleKind); 4] = [
    ("mean", RuleKind::Mean),
    ("median", RuleKind::Median),
    ("trim", RuleKind::Trim),
    ("glid", RuleKind::Glid),
];

fn section_matrix(seeds: u64, lr: f64) {
    println!("== attack x defense, p = 0.20, {seeds} seed(s), lr {lr} ==");
    let mut baseline: BTreeMap<&str, Cell> = BTreeMap::new();
    for (dname, rule) in DEFENSE_NAMES {
        baseline.insert(dname, run_cell(seeds, lr, None, 0.0, defense(rule)));
    }
    print!("{:<10}", "attack");
    for (dname, _) in DEFENSE_NAMES {
        print!("{:>26}", format!("{dname} mse (ratio)"));
    }
    println!();
    print!("{:<10}", "none");
    for (dname, _) in DEFENSE_NAMES {
        let b = baseline[dname];
        print!("{:>26}", format!("{:.4} / mae {:.4}", b.mse, b.mae));
    }
    println!();
    for (aname, kind) in ATTACK_NAMES {
        print!("{:<10}", aname);
        for (dname, rule) in DEFENSE_NAMES {
            let cell = run_cell(seeds, lr, Some(attack_named(kind)), 0.2, defense(rule));
            let b = baseline[dname];
            print!(
                "{:>26}",
                format!(
                    "{:.3} ({:.1}x/{:.1}x)",
                    cell.mse,
                    cell.mse / b.mse,
                    cell.mae / b.mae
                )
            );
        }
        println!();
    }
    println!();
}

fn section_pfrac(seeds: u64, lr: f64) {
    println!("== median under fti across fake fractions, per seed mse ==");
    for p in [0.05, 0.10, 0.20, 0.30, 0.40] {
        print!("p = {p:<5}");
        for seed in 0..seeds {
            let mut cfg = base_scenario(seed, lr);
            cfg.attack = Some(attack_named(AttackKind::Fti));
            cfg.fake_fraction = p;
            cfg.defense = defense(RuleKind::Median);
            let outcome = run_experiment(&cfg).expect("run failed");
            print!("  {:>18.12e}", outcome.report.final_mse);
        }
        println!();
    }
    print!("none     ");
    for seed in 0..seeds {
        let cfg = base_scenario(seed, lr);
        let outcome = run_experiment(&cfg).expect("run failed");
        print!("  {:>18.12e}", outcome.report.final_mse);
    }
    println!("\n");
}

fn section_eta0(seeds: u64, lr: f64) {
    println!("== median under fti across eta0, p = 0.20, mean mse ==");
    for eta0 in [1.0, 10.0, 20.0] {
        let mut attack = attack_named(AttackKind::Fti);
        attack.eta0 = eta0;
        let cell = run_cell(seeds, lr, Some(attack), 0.2, defense(RuleKind::Median));
        println!("eta0 = {eta0:<5}  mse {:.15e}  mae {:.15e}", cell.mse, cell.mae);
    }
    println!();
}

fn section_pairs(seeds: u64, lr: f64) {
    println!("== glid fixed pairs x baseline attacks, p = 0.20, mse ratio vs no attack ==");
    let pairs = [(10.0, 70.0), (10.0, 80.0), (10.0, 90.0), (20.0, 70.0), (20.0, 80.0)];
    let mut baseline: BTreeMap<String, Cell> = BTreeMap::new();
    for (lo, hi) in pairs {
        baseline.insert(
            format!("{lo}-{hi}"),
            run_cell(seeds, lr, None, 0.0, glid_fixed(lo, hi)),
        );
    }
    print!("{:<10}", "attack");
    for (lo, hi) in pairs {
        print!("{:>16}", format!("[{lo},{hi}]"));
    }
    println!();
    for (aname, kind) in ATTACK_NAMES {
        if aname == "fti" {
            continue;
        }
        print!("{:<10}", aname);
        for (lo, hi) in pairs {
            let cell = run_cell(seeds, lr, Some(attack_named(kind)), 0.2, glid_fixed(lo, hi));
            let b = baseline[&format!("{lo}-{hi}")];
            print!("{:>16}", format!("{:.1}x", cell.mse / b.mse));
        }
        println!();
    }
    println!();
}

fn section_zheng(seeds: u64, lr: f64) {
    println!("== zheng scale sweep under mean, per seed mse ratio vs no attack ==");
    let mut none = Vec::new();
    for seed in 0..seeds {
        let cfg = base_scenario(seed, lr);
        none.push(run_experiment(&cfg).expect("run failed").report.final_mse);
    }
    for scale in [2.2, 2.4, 2.6, 2.8, 3.0, 3.2, 3.4, 3.6, 3.8] {
        print!("scale = {scale:<5}");
        for seed in 0..seeds {
            let mut cfg = base_scenario(seed, lr);
            let mut attack = attack_named(AttackKind::Zheng);
            attack.scale = scale;
            cfg.attack = Some(attack);
            cfg.fake_fraction = 0.2;
            cfg.defense = defense(RuleKind::Mean);
            let outcome = run_experiment(&cfg).expect("run failed");
            print!(
                "  {:>10.1}x",
                outcome.report.final_mse / none[seed as usize]
            );
        }
        println!();
    }
    println!();
}

fn main() {
    let seeds: u64 = env_or("SEEDS", 3);
    let lr: f64 = env_or("LR", 0.05);
    let args: Vec<String> = std::env::args().skip(1).collect();
    let want = |name: &str| args.is_empty() || args.iter().any(|a| a == name);

    let start = std::time::Instant::now();
    if want("matrix") {
        section_matrix(seeds, lr);
    }
    if want("pfrac") {
        section_pfrac(seeds, lr);
    }
    if want("eta0") {
        section_eta0(seeds, lr);
    }
    if want("pairs") {
        section_pairs(seeds, lr);
    }
    if want("zheng") {
        section_zheng(seeds, lr);
    }
    println!("total wall clock: {:.1}s", start.elapsed().as_secs_f64());
}
