use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::moments::{normal_cdf, predictive_bounds, Predictive, PredictiveMoments};
use super::paths::simulate;
use crate::error::{Error, Result};
use crate::estimation::FittedModel;
use crate::kernel::RngHandle;
use crate::snapshot::InterimSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ForecastMethod {
    #[default]
    Paths,
    Normal,
}

impl fmt::Display for ForecastMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Paths => "paths",
            Self::Normal => "normal",
        })
    }
}

impl FromStr for ForecastMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paths" => Ok(Self::Paths),
            "normal" | "normal-inversion" => Ok(Self::Normal),
            other => Err(Error::config("method", format!("unknown forecast method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSettings {
    pub method: ForecastMethod,
    pub n_paths: usize,
    /// Bounds and intervals are at level 1 − δ.
    pub delta: f64,
    /// Last forecast time; derived from the expected rate when absent.
    pub horizon: Option<f64>,
    pub grid_points: usize,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        Self {
            method: ForecastMethod::Paths,
            n_paths: 10_000,
            delta: 0.05,
            horizon: None,
            grid_points: 200,
        }
    }
}

impl ForecastSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::config("forecast.n_paths", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("forecast.delta", "must lie in (0, 1)"));
        }
        if self.grid_points < 2 {
            return Err(Error::config("forecast.grid_points", "must be at least 2"));
        }
        if let Some(h) = self.horizon {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::config("forecast.horizon", "must be a positive time"));
            }
        }
        Ok(())
    }
}

/// Distribution summary of the time to reach the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub median: f64,
    pub q975: f64,
}

impl TimeSummary {
    fn constant(t: f64) -> Self {
        Self {
            mean: t,
            sd: 0.0,
            q025: t,
            median: t,
            q975: t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub t: f64,
    pub mean: f64,
    pub variance: f64,
    pub lower: f64,
    pub upper: f64,
    /// P(T ≤ t): probability the target has been reached by `t`.
    pub p_reached: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub method: ForecastMethod,
    pub target: u64,
    pub observed: u64,
    pub t1: f64,
    pub horizon: f64,
    pub delta: f64,
    /// Summary from `method`.
    pub summary: TimeSummary,
    pub paths_summary: Option<TimeSummary>,
    pub normal_summary: Option<TimeSummary>,
    pub grid: Vec<GridRow>,
    pub n_paths: usize,
    pub seed: u64,
    pub stream_id: u64,
    /// Paths that had not reached the target by the horizon.
    pub unreached_fraction: f64,
    /// The target was already met at the interim time.
    pub degenerate: bool,
    pub notice: Option<String>,
}

impl ForecastResult {
    pub fn moments(&self) -> Vec<PredictiveMoments<f64>> {
        self.grid
            .iter()
            .map(|g| PredictiveMoments {
                t: g.t,
                mean: g.mean,
                variance: g.variance,
                floor: self.observed as f64,
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub const GRID_HEADER: [&'static str; 6] = ["t", "mean", "variance", "lower", "upper", "p_reached"];

    pub fn write_grid_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::GRID_HEADER)?;
        for g in &self.grid {
            out.serialize((g.t, g.mean, g.variance, g.lower, g.upper, g.p_reached))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Type-7 sample quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(sorted: &[f64], delta: f64) -> TimeSummary {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = if sorted.len() > 1 {
        (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    TimeSummary {
        mean,
        sd,
        q025: quantile(sorted, delta / 2.0),
        median: quantile(sorted, 0.5),
        q975: quantile(sorted, 1.0 - delta / 2.0),
    }
}

/// P(T ≤ t) under the normal approximation of the count at `t`.
fn normal_p(pred: &Predictive<f64>, target: u64, t: f64) -> Result<f64> {
    let m = pred.moments_at(t)?;
    let gap = m.mean - target as f64;
    if m.variance <= 0.0 {
        return Ok(if gap >= 0.0 { 1.0 } else { 0.0 });
    }
    Ok(normal_cdf(gap / m.sd()))
}

fn normal_summary(pred: &Predictive<f64>, target: u64, horizon: f64, delta: f64) -> Result<TimeSummary> {
    let t1 = pred.t1;
    let p_end = normal_p(pred, target, horizon)?;
    if p_end < 0.99 {
        return Err(Error::Horizon(format!(
            "normal approximation gives P(target reached by {horizon}) = {p_end:.4}; increase the horizon"
        )));
    }
    let invert = |q: f64| -> Result<f64> {
        let (mut lo, mut hi) = (t1, horizon);
        if normal_p(pred, target, hi)? < q {
            return Ok(hi);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_p(pred, target, mid)? >= q {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-10 * (1.0 + hi.abs()) {
                break;
            }
        }
        Ok(hi)
    };
    // E[T] = t1 + ∫(1 − G), E[T²] = t1² + ∫ 2t(1 − G), composite Simpson.
    let n = 2000;
    let h = (horizon - t1) / n as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for i in 0..=n {
        let t = t1 + i as f64 * h;
        let s = 1.0 - normal_p(pred, target, t)?;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        m1 += w * s;
        m2 += w * 2.0 * t * s;
    }
    let mean = t1 + m1 * h / 3.0;
    let second = t1 * t1 + m2 * h / 3.0;
    Ok(TimeSummary {
        mean,
        sd: (second - mean * mean).max(0.0).sqrt(),
        q025: invert(delta / 2.0)?,
        median: invert(0.5)?,
        q975: invert(1.0 - delta / 2.0)?,
    })
}

fn build_grid(pred: &Predictive<f64>, target: u64, horizon: f64, points: usize) -> Result<Vec<f64>> {
    let t1 = pred.t1;
    let step = (horizon - t1) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| t1 + i as f64 * step).collect();
    grid[points - 1] = horizon;
    let mut cross = None;
    for (i, &t) in grid.iter().enumerate() {
        if pred.moments_at(t)?.mean >= target as f64 {
            cross = Some(i);
            break;
        }
    }
    if let Some(i) = cross {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(points - 1);
        let mut extra = Vec::new();
        for j in lo..hi {
            let (a, b) = (grid[j], grid[j + 1]);
            extra.extend((1..5).map(|k| a + (b - a) * k as f64 / 5.0));
        }
        grid.extend(extra);
        grid.sort_by(f64::total_cmp);
    }
    Ok(grid)
}

/// Default horizon: four times the expected time to collect the missing
/// patients at the expected rate, after the last flow start.
pub fn default_horizon(pred: &Predictive<f64>, target: u64) -> f64 {
    let missing = target.saturating_sub(pred.observed()) as f64;
    let last = pred
        .centres
        .iter()
        .map(|c| pred.flow_start(c))
        .fold(pred.t1 + pred.screening_window, f64::max);
    let rate = pred.expected_rate();
    if rate > 0.0 {
        last + 4.0 * missing.max(1.0) / rate
    } else {
        last + 1.0
    }
}

/// Forecasts the time at which the randomized count reaches `target`.
pub fn recruitment_time_forecast(
    fm: &FittedModel<f64>,
    snap: &InterimSnapshot<f64>,
    target: u64,
    settings: &ForecastSettings,
    rng: RngHandle,
) -> Result<ForecastResult> {
    settings.validate()?;
    let pred = Predictive::new(fm, snap)?;
    forecast(&pred, target, settings, rng)
}

pub(crate) fn forecast(
    pred: &Predictive<f64>,
    target: u64,
    settings: &ForecastSettings,
    rng: RngHandle,
) -> Result<ForecastResult> {
    let t1 = pred.t1;
    let observed = pred.observed();
    let horizon = settings.horizon.unwrap_or_else(|| default_horizon(pred, target));
    if !(horizon > t1) {
        return Err(Error::Horizon(format!("horizon {horizon} must exceed t1 = {t1}")));
    }
    let mut result = ForecastResult {
        method: settings.method,
        target,
        observed,
        t1,
        horizon,
        delta: settings.delta,
        summary: TimeSummary::constant(t1),
        paths_summary: None,
        normal_summary: None,
        grid: Vec::new(),
        n_paths: 0,
        seed: rng.seed,
        stream_id: rng.stream_id,
        unreached_fraction: 0.0,
        degenerate: false,
        notice: None,
    };

    let grid = build_grid(pred, target, horizon, settings.grid_points)?;
    let moments = grid
        .iter()
        .map(|&t| pred.moments_at(t))
        .collect::<Result<Vec<_>>>()?;

    if target <= observed {
        result.degenerate = true;
        result.notice = Some(format!(
            "target {target} already met at t1 = {t1} ({observed} randomized)"
        ));
        result.paths_summary = Some(result.summary);
        result.normal_summary = Some(result.summary);
        result.grid = fill_grid(&moments, settings.delta, |_| 1.0)?;
        return Ok(result);
    }

    let normal = normal_summary(pred, target, horizon, settings.delta);
    match settings.method {
        ForecastMethod::Normal => {
            let s = normal?;
            result.summary = s;
            result.normal_summary = Some(s);
            result.grid = fill_grid(&moments, settings.delta, |t| {
                normal_p(pred, target, t).unwrap_or(f64::NAN)
            })?;
        }
        ForecastMethod::Paths => {
            let ens = simulate(pred, horizon, settings.n_paths, rng)?;
            let passages = ens.first_passages(target);
            let mut times: Vec<f64> = passages.iter().flatten().copied().collect();
            times.sort_by(f64::total_cmp);
            let late = passages.len() - times.partition_point(|&t| t <= horizon);
            let unreached = late as f64 / passages.len() as f64;
            if unreached > 0.01 {
                let reached = times.partition_point(|&t| t <= horizon);
                let hint = if times.len() * 100 >= passages.len() * 99 {
                    format!("; 99% of paths need a horizon of about {:.3}", quantile(&times, 0.99))
                } else {
                    String::new()
                };
                return Err(Error::Horizon(format!(
                    "only {reached} of {} paths reach {target} by {horizon}{hint}",
                    passages.len()
                )));
            }
            let s = summarize(&times, settings.delta);
            result.summary = s;
            result.paths_summary = Some(s);
            result.normal_summary = normal.ok();
            result.n_paths = settings.n_paths;
            result.unreached_fraction = unreached;
            let n = passages.len() as f64;
            result.grid = fill_grid(&moments, settings.delta, |t| {
                times.partition_point(|&x| x <= t) as f64 / n
            })?;
        }
    }
    Ok(result)
}

fn fill_grid(
    moments: &[PredictiveMoments<f64>],
    delta: f64,
    p_reached: impl Fn(f64) -> f64,
) -> Result<Vec<GridRow>> {
    moments
        .iter()
        .map(|m| {
            let (lower, upper) = predictive_bounds(m, delta)?;
            Ok(GridRow {
                t: m.t,
                mean: m.mean,
                variance: m.variance,
                lower,
                upper,
                p_reached: p_reached(m.t),
            })
        })
        .collect()
}
