use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use recruit_core::estimation::{fit, FittedModel};
use recruit_core::prediction::recruitment_time_forecast;
use recruit_core::{generate_trial, run_study, ForecastMethod, ModelTag, PatientTable, RngHandle};
use serde::Serialize;

use crate::config::RunConfigFile;
use crate::exit::CliError;

pub const DEFAULT_SEED: u64 = 1;

const PART1_PLAN: &str = include_str!("../plans/part1.plan");
const PART2_PLAN: &str = include_str!("../plans/part2.plan");

/// Loaded configuration plus the text it came from.
pub struct LoadedConfig {
    pub path: Option<String>,
    pub text: String,
    pub parsed: RunConfigFile,
}

impl LoadedConfig {
    /// Reads `path`; the names of the bundled plans resolve to their
    /// embedded copies when no such file exists.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self {
                path: None,
                text: String::new(),
                parsed: RunConfigFile::default(),
            });
        };
        let text = if path.exists() {
            fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?
        } else {
            match path.to_str() {
                Some("part1" | "part1.plan") => PART1_PLAN.to_string(),
                Some("part2" | "part2.plan") => PART2_PLAN.to_string(),
                _ => return Err(CliError::config(format!("config file {} not found", path.display()))),
            }
        };
        Ok(Self {
            path: Some(path.display().to_string()),
            parsed: RunConfigFile::parse(&text)?,
            text,
        })
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    software_version: &'a str,
    seed: Option<u64>,
    config_path: Option<&'a str>,
    config_text: &'a str,
    config: &'a RunConfigFile,
    resolved: serde_json::Value,
    outputs: Vec<String>,
    runtime_seconds: f64,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &LoadedConfig,
    seed: Option<u64>,
    resolved: serde_json::Value,
    outputs: &[&str],
    started: Instant,
) -> Result<(), CliError> {
    let m = Manifest {
        command,
        software_version: env!("CARGO_PKG_VERSION"),
        seed,
        config_path: cfg.path.as_deref(),
        config_text: &cfg.text,
        config: &cfg.parsed,
        resolved,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    fs::write(dir.join("manifest.json"), to_json(&m)?)?;
    Ok(())
}

fn to_json<S: Serialize>(v: &S) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::from(recruit_core::Error::from(e)))
}

fn to_value<S: Serialize>(v: &S) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::from(recruit_core::Error::from(e)))
}

pub struct SimulateArgs {
    pub seed: Option<u64>,
    pub out: PathBuf,
}

/// Generates one trial and writes `patients.csv` (statuses as of the
/// horizon), `latents.csv` and `manifest.json` into `out`.
pub fn simulate(cfg: &LoadedConfig, args: &SimulateArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let trial_cfg = cfg.parsed.trial_config()?;
    let seed = args.seed.or(cfg.parsed.seed).unwrap_or(DEFAULT_SEED);
    let trial = generate_trial(&trial_cfg, RngHandle::new(seed, 0))?;
    fs::create_dir_all(&args.out)?;
    let table = PatientTable::from_trial(&trial, trial_cfg.screening_window, trial_cfg.horizon)?;
    table.write_csv(fs::File::create(args.out.join("patients.csv"))?)?;

    let mut w = csv::Writer::from_path(args.out.join("latents.csv"))
        .map_err(|e| CliError::from(recruit_core::Error::from(e)))?;
    let csv_err = |e: csv::Error| CliError::from(recruit_core::Error::from(e));
    w.write_record(["centre_id", "opening_time", "lambda", "r", "theta"]).map_err(csv_err)?;
    for (l, u) in trial.latents.iter().zip(&trial.openings) {
        w.write_record([
            l.centre_id.to_string(),
            u.to_string(),
            l.lambda.to_string(),
            l.r.to_string(),
            l.theta.map(|t| t.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    write_manifest(
        &args.out,
        "simulate",
        cfg,
        Some(seed),
        to_value(&trial_cfg)?,
        &["patients.csv", "latents.csv"],
        started,
    )
}

pub struct EstimateArgs {
    pub data: PathBuf,
    pub model: ModelTag,
    pub t1: f64,
    pub out: PathBuf,
}

fn screening_window(cfg: &LoadedConfig, table: &PatientTable) -> f64 {
    cfg.parsed
        .trial
        .screening_window
        .unwrap_or_else(|| table.infer_screening_window())
}

/// Fits a model to the data as of `t1` and writes the fitted model JSON.
pub fn estimate(cfg: &LoadedConfig, args: &EstimateArgs) -> Result<FittedModel<f64>, CliError> {
    let table = PatientTable::read_csv_path(&args.data)?;
    if args.model.has_screening() && !table.has_screening_detail() {
        return Err(CliError::data(format!(
            "model {} needs `last_seen_time` and `status` for every patient",
            args.model
        )));
    }
    let window = screening_window(cfg, &table);
    if args.model.has_screening() && window <= 0.0 {
        return Err(CliError::data(format!(
            "model {} needs a screening window, but none is configured and no randomized patient shows one",
            args.model
        )));
    }
    let snap = table.snapshot_at(args.t1, window)?;
    let fm = fit(&snap, args.model, &cfg.parsed.optimizer()?)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&args.out, fm.to_json()?)?;
    for w in &fm.warnings {
        eprintln!("warning: {w}");
    }
    Ok(fm)
}

pub struct PredictArgs {
    pub fitted: PathBuf,
    pub data: PathBuf,
    pub target: Option<u64>,
    pub horizon: Option<f64>,
    pub method: Option<ForecastMethod>,
    pub n_paths: Option<usize>,
    pub delta: Option<f64>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

/// Forecasts the recruitment time and writes `forecast.json`,
/// `forecast_grid.csv` and `manifest.json` into `out`.
pub fn predict(cfg: &LoadedConfig, args: &PredictArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let text = fs::read_to_string(&args.fitted)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", args.fitted.display())))?;
    let fm = FittedModel::<f64>::from_json(&text)?;
    let table = PatientTable::read_csv_path(&args.data)?;
    let snap = table.snapshot_at(fm.t1, fm.screening_window)?;

    let mut settings = cfg.parsed.forecast(false);
    if let Some(m) = args.method {
        settings.method = m;
    }
    if let Some(n) = args.n_paths {
        settings.n_paths = n;
    }
    if let Some(d) = args.delta {
        settings.delta = d;
    }
    if args.horizon.is_some() {
        settings.horizon = args.horizon;
    }
    settings.validate()?;
    let target = match args.target {
        Some(t) => t,
        None => cfg.parsed.trial_config()?.target,
    };
    let seed = args.seed.or(cfg.parsed.seed).unwrap_or(DEFAULT_SEED);
    let result = recruitment_time_forecast(&fm, &snap, target, &settings, RngHandle::new(seed, 0))?;
    if let Some(n) = &result.notice {
        eprintln!("notice: {n}");
    }
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("forecast.json"), result.to_json()?)?;
    result.write_grid_csv(fs::File::create(args.out.join("forecast_grid.csv"))?)?;
    write_manifest(
        &args.out,
        "predict",
        cfg,
        Some(seed),
        to_value(&serde_json::json!({ "target": target, "forecast": settings }))?,
        &["forecast.json", "forecast_grid.csv"],
        started,
    )
}

pub struct StudyArgs {
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub out: PathBuf,
}

/// Runs the study and writes its tables, figure data, `report.json` and
/// `manifest.json` into `out`.
pub fn study(cfg: &LoadedConfig, args: &StudyArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut plan = cfg.parsed.study_plan()?;
    if let Some(s) = args.seed {
        plan.base_seed = s;
    }
    if let Some(n) = args.replications {
        plan.n_replications = n;
        plan.validate()?;
    }
    let report = run_study(&plan, args.workers)?;
    if !report.failures.is_empty() {
        eprintln!(
            "warning: {} of {} replications failed and were excluded",
            report.failures.len(),
            plan.n_replications
        );
    }
    report.write_artifacts(&args.out)?;
    let table = plan.duration_table();
    write_manifest(
        &args.out,
        "study",
        cfg,
        Some(plan.base_seed),
        to_value(&serde_json::json!({ "plan": plan, "workers": args.workers }))?,
        &[
            "table2.csv",
            table,
            "figures/param_dist.csv",
            "figures/duration_dist.csv",
            "report.json",
        ],
        started,
    )
}
