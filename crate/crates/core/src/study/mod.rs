//! Monte Carlo study: replicate trials, fit every model at several interim
//! times, forecast the recruitment duration, and aggregate.

mod export;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, FittedModel, OptimizerSettings};
use crate::kernel::RngHandle;
use crate::prediction::{forecast, ForecastSettings, Predictive, TimeSummary};
use crate::snapshot::take_snapshot;
use crate::trial::{generate_trial, recruitment_stop_time, ModelTag, TrialConfig};

pub use export::{export_figure_data, FigureKind, FigureRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyPlan {
    pub name: String,
    pub config: TrialConfig,
    pub interim_times: Vec<f64>,
    pub models: Vec<ModelTag>,
    pub n_replications: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub forecast: ForecastSettings,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
}

impl StudyPlan {
    fn preset(name: &str, config: TrialConfig, interim_times: Vec<f64>, models: Vec<ModelTag>) -> Self {
        Self {
            name: name.into(),
            config,
            interim_times,
            models,
            n_replications: 500,
            base_seed: 20_240_607,
            forecast: ForecastSettings {
                n_paths: 2000,
                grid_points: 50,
                ..Default::default()
            },
            optimizer: OptimizerSettings::default(),
        }
    }

    /// Instant dropout: A.2 data, A.1 and A.2 fitted at t1 = 1, 1.5, 2.
    pub fn part_one() -> Self {
        Self::preset(
            "part1",
            TrialConfig::part_one(),
            vec![1.0, 1.5, 2.0],
            vec![ModelTag::A1, ModelTag::A2],
        )
    }

    /// Screening dropout: B.3 data, B.1 to B.3 fitted at t1 = 1, 2, 3.
    pub fn part_two() -> Self {
        Self::preset(
            "part2",
            TrialConfig::part_two(),
            vec![1.0, 2.0, 3.0],
            vec![ModelTag::B1, ModelTag::B2, ModelTag::B3],
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.forecast.validate()?;
        self.optimizer.validate()?;
        if self.n_replications == 0 {
            return Err(Error::config("n_replications", "must be at least 1"));
        }
        if self.interim_times.is_empty() {
            return Err(Error::config("interim_times", "at least one interim time is required"));
        }
        if !(self.interim_times[0] > 0.0) || self.interim_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("interim_times", "must be positive and strictly increasing"));
        }
        if self.models.is_empty() {
            return Err(Error::config("models", "at least one model is required"));
        }
        let has_window = self.config.screening_window > 0.0;
        for m in &self.models {
            if m.has_screening() && !has_window {
                return Err(Error::config(
                    "models",
                    format!("{m} needs a positive screening window in the trial config"),
                ));
            }
        }
        Ok(())
    }

    /// Output table name for the duration results.
    pub fn duration_table(&self) -> &'static str {
        if self.models.iter().any(|m| m.has_screening()) {
            "table4.csv"
        } else {
            "table3.csv"
        }
    }

    /// Root handle of replication `rep`.
    pub fn replication_rng(&self, rep: usize) -> RngHandle {
        RngHandle::new(self.base_seed, 0).child(rep as u64)
    }
}

/// Outcome of one (model, t1) cell in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub model: ModelTag,
    pub t1: f64,
    pub estimates: BTreeMap<String, f64>,
    pub forecast: TimeSummary,
    pub covered: bool,
    pub warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub rng: RngHandle,
    pub observed_duration: f64,
    pub cells: Vec<CellRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub rng: RngHandle,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub model: ModelTag,
    pub t1: f64,
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationRow {
    pub model: ModelTag,
    pub t1: f64,
    /// Mean over replications of the point forecast (predictive mean).
    pub mean: f64,
    /// SD over replications of the point forecast.
    pub sd: f64,
    /// Mean over replications of 100·|forecast − observed| / observed.
    pub pct_bias: f64,
    /// 100·(mean forecast − mean observed) / mean observed.
    pub pct_bias_signed: f64,
    /// Fraction of replications whose observed duration lies in the interval.
    pub coverage: f64,
    /// Mean over replications of the predictive median.
    pub median_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub plan: StudyPlan,
    pub software_version: String,
    pub completed: usize,
    pub failures: Vec<ReplicationFailure>,
    pub observed: MeanSd,
    pub estimates: Vec<EstimateRow>,
    pub durations: Vec<DurationRow>,
    pub records: Vec<ReplicationRecord>,
}

impl StudyReport {
    pub fn duration(&self, model: ModelTag, t1: f64) -> Option<&DurationRow> {
        self.durations.iter().find(|d| d.model == model && d.t1 == t1)
    }

    pub fn estimate(&self, model: ModelTag, t1: f64, parameter: &str) -> Option<&EstimateRow> {
        self.estimates
            .iter()
            .find(|e| e.model == model && e.t1 == t1 && e.parameter == parameter)
    }
}

/// Named point estimates of a fitted model, including the derived
/// ψ₁/(ψ₁+ψ₂) and μ₂ = α₂/β₂.
pub fn named_estimates(fm: &FittedModel<f64>) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    m.insert("alpha".into(), fm.alpha);
    m.insert("mu".into(), fm.mu);
    if let Some(r) = fm.r_hat {
        m.insert("r".into(), r);
    }
    if let Some(th) = fm.theta_hat {
        m.insert("theta".into(), th);
    }
    if let Some(p) = fm.psi {
        m.insert("psi1".into(), p.a);
        m.insert("psi2".into(), p.b);
        m.insert("psi_ratio".into(), p.a / (p.a + p.b));
    }
    if let Some(g) = fm.theta_prior {
        m.insert("alpha2".into(), g.shape);
        m.insert("mu2".into(), g.shape / g.rate);
    }
    m
}

fn run_replication(plan: &StudyPlan, rep: usize) -> Result<ReplicationRecord> {
    let rng = plan.replication_rng(rep);
    let trial = generate_trial(&plan.config, rng.child(0))?;
    let observed = recruitment_stop_time(&trial, &plan.config).ok_or_else(|| {
        Error::Horizon(format!(
            "the generated trial does not reach {} randomized patients by {}",
            plan.config.target, plan.config.horizon
        ))
    })?;
    let window = plan.config.screening_window;
    let mut cells = Vec::new();
    for (ti, &t1) in plan.interim_times.iter().enumerate() {
        let snap = take_snapshot(&trial, window, t1)?;
        for &model in &plan.models {
            let fm = fit(&snap, model, &plan.optimizer)?;
            let key = ModelTag::ALL.iter().position(|&m| m == model).unwrap_or(0) as u64;
            let pred = Predictive::new(&fm, &snap)?;
            let fc = forecast(&pred, plan.config.target, &plan.forecast, rng.child(1).child(ti as u64).child(key))?;
            cells.push(CellRecord {
                model,
                t1,
                estimates: named_estimates(&fm),
                forecast: fc.summary,
                covered: fc.summary.q025 <= observed && observed <= fc.summary.q975,
                warnings: fm.warnings.len(),
            });
        }
    }
    Ok(ReplicationRecord {
        replication: rep,
        rng,
        observed_duration: observed,
        cells,
    })
}

/// Per (model, t1, parameter) mean and SD of the estimates.
pub fn summarize_estimates(records: &[ReplicationRecord]) -> Vec<EstimateRow> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let mut rows = Vec::new();
    for (ci, cell) in first.cells.iter().enumerate() {
        for name in cell.estimates.keys() {
            let xs: Vec<f64> = records
                .iter()
                .filter_map(|r| r.cells.get(ci).and_then(|c| c.estimates.get(name)).copied())
                .collect();
            let s = MeanSd::of(&xs);
            rows.push(EstimateRow {
                model: cell.model,
                t1: cell.t1,
                parameter: name.clone(),
                mean: s.mean,
                sd: s.sd,
            });
        }
    }
    rows
}

fn summarize_durations(records: &[ReplicationRecord], observed: MeanSd) -> Vec<DurationRow> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    first
        .cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let n = records.len() as f64;
            let points: Vec<f64> = records.iter().map(|r| r.cells[ci].forecast.mean).collect();
            let s = MeanSd::of(&points);
            let abs_rel = records
                .iter()
                .map(|r| (r.cells[ci].forecast.mean - r.observed_duration).abs() / r.observed_duration)
                .sum::<f64>()
                / n;
            DurationRow {
                model: cell.model,
                t1: cell.t1,
                mean: s.mean,
                sd: s.sd,
                pct_bias: 100.0 * abs_rel,
                pct_bias_signed: 100.0 * (s.mean - observed.mean) / observed.mean,
                coverage: records.iter().filter(|r| r.cells[ci].covered).count() as f64 / n,
                median_mean: records.iter().map(|r| r.cells[ci].forecast.median).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Runs the study on `workers` threads (all available when `None`). The
/// report does not depend on the number of workers.
pub fn run_study(plan: &StudyPlan, workers: Option<usize>) -> Result<StudyReport> {
    plan.validate()?;
    let run = || -> Vec<Result<ReplicationRecord>> {
        (0..plan.n_replications)
            .into_par_iter()
            .map(|rep| run_replication(plan, rep))
            .collect()
    };
    let outcomes = match workers {
        Some(0) => return Err(Error::config("workers", "must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))?
            .install(run),
        None => run(),
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (rep, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("replication {rep} failed: {e}");
                failures.push(ReplicationFailure {
                    replication: rep,
                    rng: plan.replication_rng(rep),
                    error: e.to_string(),
                });
            }
        }
    }
    if records.is_empty() {
        return Err(Error::Precondition(format!(
            "all {} replications failed; first error: {}",
            failures.len(),
            failures.first().map(|f| f.error.as_str()).unwrap_or("")
        )));
    }
    let durations: Vec<f64> = records.iter().map(|r| r.observed_duration).collect();
    let observed = MeanSd::of(&durations);
    Ok(StudyReport {
        plan: plan.clone(),
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        completed: records.len(),
        failures,
        observed,
        estimates: summarize_estimates(&records),
        durations: summarize_durations(&records, observed),
        records,
    })
}
