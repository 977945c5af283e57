//! Experiment runner: single runs, one-axis sweeps, and synthetic
//! traffic generation. Every artifact is a pure function of the config
//! file plus command-line overrides, so runs are reproducible from the
//! emitted config echo alone.
//!
//! Exit codes: 0 success, 2 for configuration problems (unreadable or
//! invalid configs, bad overrides, empty sweeps), 1 for runtime
//! failures such as unwritable output paths.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use ndtsim_core::data::{export_csv, synth_generate, SynthSpec};
use ndtsim_core::orchestrator::{run_experiment, ExperimentOutcome};
use ndtsim_core::report::{render_flags_csv, render_report_json, render_rounds_csv};
use ndtsim_core::scenario::ScenarioConfig;

#[derive(Parser)]
#[command(name = "ndtsim", version, about = "Federated traffic-twin experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write report.json, rounds.csv, flags.csv.
    Run(RunArgs),
    /// Run every value of a one-axis sweep and write matrix.csv.
    Sweep(SweepArgs),
    /// Generate a synthetic traffic CSV consumable as a data source.
    GenData(GenDataArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config, TOML.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Replaces the config's seed; applied after --override.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-path config override, e.g. predictor.lr=0.01; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep config, TOML: axis, values, and a [base] scenario.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Replaces the base scenario's seed; applied after --override.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-path override applied to the base scenario; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct GenDataArgs {
    /// Generator spec, TOML: num_ndts, length, daily_period, base,
    /// amplitude, noise_sd, heterogeneity, seed.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Replaces the generator seed; applied after --override.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-path spec override; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Marker for problems that must exit with status 2.
#[derive(Debug)]
struct ConfigProblem(String);

impl std::fmt::Display for ConfigProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigProblem {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ConfigProblem(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_workers();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.chain().any(|cause| cause.is::<ConfigProblem>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::GenData(args) => cmd_gen_data(args),
    }
}

/// Sizes the shared worker pool from NDTSIM_WORKERS when set.
fn init_workers() {
    let Ok(raw) = std::env::var("NDTSIM_WORKERS") else {
        return;
    };
    match raw.parse::<usize>() {
        Ok(n) if n > 0 => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("warning: ignoring NDTSIM_WORKERS={raw}; expected a positive integer"),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut value = load_toml(&args.config)?;
    apply_cli_overrides(&mut value, &args.overrides, args.seed)?;
    let cfg = scenario_from_value(value)?;
    let outcome = run_experiment(&cfg).context("experiment failed")?;
    write_artifacts(&args.out, &outcome)?;
    println!(
        "{} rounds, final mae {} mse {} -> {}",
        outcome.report.rounds_completed,
        outcome.report.final_mae,
        outcome.report.final_mse,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Axis {
    Attack,
    Defense,
    FakeFraction,
    Eta0,
    PercentilePair,
    Estimator,
    NumNdts,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Attack => "attack",
            Axis::Defense => "defense",
            Axis::FakeFraction => "fake_fraction",
            Axis::Eta0 => "eta0",
            Axis::PercentilePair => "percentile_pair",
            Axis::Estimator => "estimator",
            Axis::NumNdts => "num_ndts",
        }
    }
}

#[derive(Deserialize)]
struct SweepFile {
    axis: Axis,
    values: Vec<toml::Value>,
    base: toml::Value,
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let raw = load_toml(&args.config)?;
    let spec: SweepFile = raw
        .try_into()
        .map_err(|e| config_err(format!("invalid sweep config: {e}")))?;
    if spec.values.is_empty() {
        return Err(config_err("sweep needs at least one axis value"));
    }
    let mut base = spec.base;
    apply_cli_overrides(&mut base, &args.overrides, args.seed)?;

    // Materialize and validate every cell before running any, so a
    // bad value cannot waste the earlier cells' work.
    let mut cells = Vec::with_capacity(spec.values.len());
    for value in &spec.values {
        let mut cell = base.clone();
        apply_axis(&mut cell, spec.axis, value)?;
        let cfg = scenario_from_value(cell)
            .with_context(|| format!("{} = {}", spec.axis.name(), value_label(value)))?;
        cells.push((value_label(value), cfg));
    }

    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut matrix = String::from("axis,value,attack,defense,final_mae,final_mse\n");
    for (label, cfg) in &cells {
        let outcome = run_experiment(cfg)
            .with_context(|| format!("cell {} = {label} failed", spec.axis.name()))?;
        let cell_dir = args
            .out
            .join("cells")
            .join(format!("{}_{label}", spec.axis.name()));
        write_artifacts(&cell_dir, &outcome)?;
        let attack = cfg
            .attack
            .as_ref()
            .map_or("none".to_string(), |a| toml_variant_name(&a.kind));
        let defense = toml_variant_name(&cfg.defense.rule);
        let _ = writeln!(
            matrix,
            "{},{label},{attack},{defense},{},{}",
            spec.axis.name(),
            outcome.report.final_mae,
            outcome.report.final_mse,
        );
        println!(
            "{} = {label}: mae {} mse {}",
            spec.axis.name(),
            outcome.report.final_mae,
            outcome.report.final_mse
        );
    }
    let matrix_path = args.out.join("matrix.csv");
    fs::write(&matrix_path, matrix)
        .with_context(|| format!("cannot write {}", matrix_path.display()))?;
    println!("{} cells -> {}", cells.len(), matrix_path.display());
    Ok(())
}

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let mut value = load_toml(&args.config)?;
    apply_cli_overrides(&mut value, &args.overrides, args.seed)?;
    let spec: SynthSpec = value
        .try_into()
        .map_err(|e| config_err(format!("invalid generator spec: {e}")))?;
    spec.validate().map_err(|e| config_err(e.to_string()))?;
    let series = synth_generate(&spec).map_err(|e| config_err(e.to_string()))?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    export_csv(&args.out, &series)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    println!(
        "wrote {} series x {} intervals to {}",
        series.len(),
        spec.length,
        args.out.display()
    );
    Ok(())
}

fn load_toml(path: &Path) -> Result<toml::Value> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<toml::Value>()
        .map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn scenario_from_value(value: toml::Value) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = value
        .try_into()
        .map_err(|e| config_err(format!("invalid scenario config: {e}")))?;
    cfg.validate().map_err(|e| config_err(e.to_string()))?;
    Ok(cfg)
}

fn apply_cli_overrides(
    value: &mut toml::Value,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<()> {
    for spec in overrides {
        apply_override(value, spec)?;
    }
    if let Some(seed) = seed {
        let seed = i64::try_from(seed)
            .map_err(|_| config_err("seed exceeds the TOML integer range"))?;
        set_value(value, "seed", toml::Value::Integer(seed))?;
    }
    Ok(())
}

/// Applies one `dotted.path=value` override. The value parses with
/// TOML scalar/array/table syntax and falls back to a bare string, so
/// `predictor.lr=0.01`, `clusters=flat`, and `defense.rule=median`
/// all work unquoted.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| config_err(format!("override '{spec}' must look like key=value")))?;
    set_value(root, path.trim(), parse_override_value(raw))
}

fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Value>() {
        Ok(toml::Value::Table(mut table)) => table
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string())),
        _ => toml::Value::String(raw.trim().to_string()),
    }
}

fn set_value(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let mut segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(config_err(format!("override path '{path}' has an empty segment")));
    }
    let last = segments.pop().expect("split yields at least one segment");
    let mut cursor = root;
    for seg in segments {
        let table = cursor
            .as_table_mut()
            .ok_or_else(|| config_err(format!("'{path}': '{seg}' is not a table")))?;
        cursor = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    cursor
        .as_table_mut()
        .ok_or_else(|| config_err(format!("'{path}': parent of '{last}' is not a table")))?
        .insert(last.to_string(), value);
    Ok(())
}

fn remove_value(root: &mut toml::Value, key: &str) {
    if let Some(table) = root.as_table_mut() {
        table.remove(key);
    }
}

fn as_number(value: &toml::Value) -> Option<f64> {
    match value {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

/// Rewrites one base scenario into the sweep cell for `value`.
fn apply_axis(cfg: &mut toml::Value, axis: Axis, value: &toml::Value) -> Result<()> {
    match axis {
        Axis::Attack => {
            let name = value.as_str().ok_or_else(|| {
                config_err(format!("attack axis values must be names, got {value}"))
            })?;
            if name == "none" {
                remove_value(cfg, "attack");
                set_value(cfg, "fake_fraction", toml::Value::Float(0.0))?;
            } else {
                set_value(cfg, "attack.kind", toml::Value::String(name.to_string()))?;
            }
        }
        Axis::Defense => {
            let name = value.as_str().ok_or_else(|| {
                config_err(format!("defense axis values must be rule names, got {value}"))
            })?;
            set_value(cfg, "defense.rule", toml::Value::String(name.to_string()))?;
        }
        Axis::FakeFraction => {
            let p = as_number(value).ok_or_else(|| {
                config_err(format!("fake_fraction axis values must be numbers, got {value}"))
            })?;
            set_value(cfg, "fake_fraction", toml::Value::Float(p))?;
        }
        Axis::Eta0 => {
            let eta0 = as_number(value).ok_or_else(|| {
                config_err(format!("eta0 axis values must be numbers, got {value}"))
            })?;
            set_value(cfg, "attack.eta0", toml::Value::Float(eta0))?;
        }
        Axis::PercentilePair => {
            let items = value.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
                config_err(format!(
                    "percentile_pair axis values must be [lo, hi] pairs, got {value}"
                ))
            })?;
            let lo = as_number(&items[0])
                .ok_or_else(|| config_err(format!("pair bound {} is not a number", items[0])))?;
            let hi = as_number(&items[1])
                .ok_or_else(|| config_err(format!("pair bound {} is not a number", items[1])))?;
            set_value(
                cfg,
                "defense.estimator.method",
                toml::Value::String("fixed".to_string()),
            )?;
            set_value(cfg, "defense.estimator.fixed_pair.lo", toml::Value::Float(lo))?;
            set_value(cfg, "defense.estimator.fixed_pair.hi", toml::Value::Float(hi))?;
        }
        Axis::Estimator => {
            let name = value.as_str().ok_or_else(|| {
                config_err(format!("estimator axis values must be method names, got {value}"))
            })?;
            set_value(
                cfg,
                "defense.estimator.method",
                toml::Value::String(name.to_string()),
            )?;
        }
        Axis::NumNdts => {
            let n = value.as_integer().filter(|n| *n > 0).ok_or_else(|| {
                config_err(format!("num_ndts axis values must be positive integers, got {value}"))
            })?;
            set_value(cfg, "num_benign", toml::Value::Integer(n))?;
        }
    }
    Ok(())
}

/// Human label for one axis value; array pairs join with '-' so the
/// matrix CSV cells stay comma-free.
fn value_label(value: &toml::Value) -> String {
    match value {
        toml::Value::String(s) => s.clone(),
        toml::Value::Array(items) => items
            .iter()
            .map(value_label)
            .collect::<Vec<_>>()
            .join("-"),
        other => other.to_string(),
    }
}

/// snake_case name of a unit enum variant via its serde form.
fn toml_variant_name<T: serde::Serialize>(value: &T) -> String {
    toml::Value::try_from(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| "unknown".to_string())
}

fn write_artifacts(dir: &Path, outcome: &ExperimentOutcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let report = render_report_json(&outcome.report).context("report serialization failed")?;
    fs::write(dir.join("report.json"), report)
        .with_context(|| format!("cannot write {}", dir.join("report.json").display()))?;
    fs::write(dir.join("rounds.csv"), render_rounds_csv(&outcome.records))
        .with_context(|| format!("cannot write {}", dir.join("rounds.csv").display()))?;
    let flags = render_flags_csv(&outcome.records, outcome.report.num_benign);
    fs::write(dir.join("flags.csv"), flags)
        .with_context(|| format!("cannot write {}", dir.join("flags.csv").display()))?;
    Ok(())
}
