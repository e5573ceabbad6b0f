use serde::{Deserialize, Serialize};

use super::likelihood::{
    beta_binomial_unchecked, binomial_counts, estimate_r_pooled, estimate_theta_pooled,
    loglik_pooled_r, loglik_pooled_theta, recruitment_unchecked, theta_prior_unchecked,
};
use super::optimize::{maximize_2d, Maximum, OptimizerSettings};
use crate::error::{Error, Result};
use crate::kernel::{BetaParams, GammaParams};
use crate::scalar::Real;
use crate::snapshot::InterimSnapshot;
use crate::trial::ModelTag;

/// Optimiser outcome for one likelihood block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagnostics {
    pub block: String,
    pub evals: usize,
    pub restarts_used: usize,
    pub converged: bool,
    pub at_bound: bool,
    pub loglik: f64,
}

pub type FitDiagnostics = Vec<BlockDiagnostics>;

/// Empirical-Bayes posteriors of one centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentrePosterior<T> {
    pub centre_id: usize,
    pub opening: T,
    pub lambda: GammaParams<T>,
    /// Present for the models with a random randomization probability.
    pub r: Option<BetaParams<T>>,
    /// Present for the models with a random screening-dropout rate.
    pub theta: Option<GammaParams<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel<T> {
    pub model: ModelTag,
    pub t1: T,
    pub screening_window: T,
    pub alpha: T,
    pub mu: T,
    /// Shared randomization probability (A.1, B.1, B.2).
    pub r_hat: Option<T>,
    /// Shared screening-dropout rate (B.1).
    pub theta_hat: Option<T>,
    /// Population Beta(ψ₁, ψ₂) of the randomization probability (A.2, B.3).
    pub psi: Option<BetaParams<T>>,
    /// Population Ga(α₂, β₂) of the screening-dropout rate (B.2, B.3).
    pub theta_prior: Option<GammaParams<T>>,
    pub centres: Vec<CentrePosterior<T>>,
    /// Sum of the maximised block log-likelihoods.
    pub loglik: T,
    pub diagnostics: FitDiagnostics,
    pub warnings: Vec<String>,
}

impl<T: Real> FittedModel<T> {
    pub fn beta(&self) -> T {
        self.alpha / self.mu
    }

    /// Population variance of the recruitment rates, μ²/α.
    pub fn sigma2_hat(&self) -> T {
        self.mu * self.mu / self.alpha
    }

    /// Population mean of the randomization probability.
    pub fn mean_r(&self) -> T {
        match (&self.psi, self.r_hat) {
            (Some(p), _) => p.mean(),
            (None, Some(r)) => r,
            (None, None) => T::one(),
        }
    }

    /// Mean of the screening-dropout rate prior, α₂/β₂.
    pub fn mu2_hat(&self) -> Option<T> {
        self.theta_prior.map(|g| g.mean())
    }

    pub fn recruitment_prior(&self) -> GammaParams<T> {
        GammaParams {
            shape: self.alpha,
            rate: self.alpha / self.mu,
        }
    }

    pub fn to_json(&self) -> Result<String>
    where
        T: Serialize,
    {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        Ok(serde_json::from_str(s)?)
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v)
}

/// Method-of-moments start for (α, μ) from the empirical rates n_i/τ_i.
fn recruitment_start<T: Real>(snap: &InterimSnapshot<T>) -> [f64; 2] {
    let open: Vec<_> = snap.open_centres().collect();
    let n: f64 = open.iter().map(|c| c.n as f64).sum();
    let tau: f64 = open.iter().map(|c| c.tau.as_f64()).sum();
    let mu = (n / tau).max(1e-3);
    let rates: Vec<f64> = open.iter().map(|c| c.n as f64 / c.tau.as_f64()).collect();
    let inv_tau = open.iter().map(|c| 1.0 / c.tau.as_f64()).sum::<f64>() / open.len() as f64;
    let (m, v) = mean_var(&rates);
    let sigma2 = v - m * inv_tau;
    let alpha = if sigma2 > 0.0 { (mu * mu / sigma2).clamp(0.1, 100.0) } else { 100.0 };
    [alpha, mu]
}

/// Start for (s, ψ₁/ψ₂) with s = ψ₁ + ψ₂.
fn beta_start<T: Real>(snap: &InterimSnapshot<T>, use_tilde: bool) -> [f64; 2] {
    let props: Vec<f64> = snap
        .open_centres()
        .map(|c| binomial_counts(c, use_tilde))
        .filter(|&(_, m)| m > 0)
        .map(|(x, m)| x as f64 / m as f64)
        .collect();
    let (m, v) = if props.len() > 1 { mean_var(&props) } else { (props.first().copied().unwrap_or(0.5), 0.0) };
    let m = m.clamp(0.01, 0.99);
    let s = if v > 0.0 { m * (1.0 - m) / v - 1.0 } else { 10.0 };
    let s = if s.is_finite() && s > 0.5 { s.min(1e3) } else { 10.0 };
    [s, m / (1.0 - m)]
}

/// Start for (α₂, μ₂) with μ₂ = α₂/β₂.
fn theta_start<T: Real>(snap: &InterimSnapshot<T>) -> [f64; 2] {
    let rates: Vec<f64> = snap
        .open_centres()
        .filter(|c| c.t_screen_sum > T::zero())
        .map(|c| c.l as f64 / c.t_screen_sum.as_f64())
        .collect();
    let (m, v) = if rates.len() > 1 { mean_var(&rates) } else { (rates.first().copied().unwrap_or(1.0), 0.0) };
    let m = m.max(1e-2);
    let a = if v > 0.0 { (m * m / v).clamp(0.1, 100.0) } else { 1.0 };
    [a, m]
}

struct Fitter<'a> {
    settings: &'a OptimizerSettings,
    diagnostics: FitDiagnostics,
    warnings: Vec<String>,
}

impl Fitter<'_> {
    fn run<T: Real, F: FnMut(T, T) -> T>(
        &mut self,
        block: &'static str,
        init: [f64; 2],
        f: F,
    ) -> Result<Maximum<T>> {
        let s = OptimizerSettings {
            init,
            ..self.settings.clone()
        };
        let m = maximize_2d(f, &s).map_err(|e| e.in_block(block))?;
        if m.at_bound {
            self.warnings.push(format!(
                "{block}: estimate clamped to the parameter box at ({}, {})",
                m.argmax[0], m.argmax[1]
            ));
        }
        if !m.converged {
            self.warnings.push(format!("{block}: optimizer stopped at its evaluation budget"));
        }
        self.diagnostics.push(BlockDiagnostics {
            block: block.to_string(),
            evals: m.evals,
            restarts_used: m.restarts_used,
            converged: m.converged,
            at_bound: m.at_bound,
            loglik: m.value.as_f64(),
        });
        Ok(m)
    }

    fn closed_form(&mut self, block: &'static str, loglik: f64) {
        self.diagnostics.push(BlockDiagnostics {
            block: block.to_string(),
            evals: 0,
            restarts_used: 0,
            converged: true,
            at_bound: false,
            loglik,
        });
    }
}

fn clamp_box<T: Real>(v: T, settings: &OptimizerSettings, name: &str, warnings: &mut Vec<String>) -> T {
    let (lo, hi) = (T::lit(settings.bounds[0]), T::lit(settings.bounds[1]));
    if v < lo || v > hi {
        warnings.push(format!("{name} = {v} clamped to [{lo}, {hi}]"));
        v.max(lo).min(hi)
    } else {
        v
    }
}

/// Fits `model` to the interim data by maximising each likelihood block
/// separately and attaches the per-centre empirical-Bayes posteriors.
pub fn fit<T: Real>(
    snap: &InterimSnapshot<T>,
    model: ModelTag,
    settings: &OptimizerSettings,
) -> Result<FittedModel<T>> {
    settings.validate()?;
    if snap.open_centres().next().is_none() {
        return Err(Error::InsufficientData {
            block: "recruitment",
            detail: format!("no centre is open before t1 = {}", snap.t1),
        });
    }
    if model.has_screening() && !(snap.screening_window > T::zero()) {
        return Err(Error::DataMismatch(format!(
            "model {model} needs a positive screening window"
        )));
    }
    if snap.total_arrivals() == 0 {
        return Err(Error::InsufficientData {
            block: "recruitment",
            detail: "no patient has arrived by t1".into(),
        });
    }

    let mut fx = Fitter {
        settings,
        diagnostics: Vec::new(),
        warnings: Vec::new(),
    };

    let rec = fx.run("recruitment", recruitment_start(snap), |a: T, m: T| {
        recruitment_unchecked(a, m, snap)
    })?;
    let alpha = rec.argmax[0];
    let mu = rec.argmax[1];
    let mut loglik = rec.value;

    let use_tilde = model.has_screening();
    let (mut r_hat, mut theta_hat, mut psi, mut theta_prior) = (None, None, None, None);

    if model.random_r() {
        let m = fx.run("randomization", beta_start(snap, use_tilde), |s: T, odds: T| {
            let p1 = s * odds / (T::one() + odds);
            let p2 = s / (T::one() + odds);
            beta_binomial_unchecked(p1, p2, snap, use_tilde)
        })?;
        loglik = loglik + m.value;
        let [s, odds] = m.argmax;
        let p1 = clamp_box(s * odds / (T::one() + odds), settings, "psi1", &mut fx.warnings);
        let p2 = clamp_box(s / (T::one() + odds), settings, "psi2", &mut fx.warnings);
        psi = Some(BetaParams { a: p1, b: p2 });
    } else {
        let r = estimate_r_pooled(snap, use_tilde)?;
        let v = loglik_pooled_r(r, snap, use_tilde)?;
        fx.closed_form("randomization", v.as_f64());
        loglik = loglik + v;
        r_hat = Some(r);
    }

    match model {
        ModelTag::B1 => {
            let th = estimate_theta_pooled(snap)?;
            let v = loglik_pooled_theta(th, snap)?;
            fx.closed_form("screening", v.as_f64());
            loglik = loglik + v;
            theta_hat = Some(th);
        }
        ModelTag::B2 | ModelTag::B3 => {
            if !snap.open_centres().any(|c| c.t_screen_sum > T::zero()) {
                return Err(Error::InsufficientData {
                    block: "screening",
                    detail: "no patient has spent time in screening".into(),
                });
            }
            let m = fx.run("screening", theta_start(snap), |a2: T, m2: T| {
                theta_prior_unchecked(a2, a2 / m2, snap)
            })?;
            loglik = loglik + m.value;
            let [a2, m2] = m.argmax;
            let b2 = clamp_box(a2 / m2, settings, "beta2", &mut fx.warnings);
            theta_prior = Some(GammaParams { shape: a2, rate: b2 });
        }
        ModelTag::A1 | ModelTag::A2 => {}
    }

    for w in &fx.warnings {
        log::debug!("{w}");
    }

    let beta = alpha / mu;
    let centres = snap
        .centres
        .iter()
        .map(|c| {
            let (x, m) = binomial_counts(c, use_tilde);
            CentrePosterior {
                centre_id: c.centre_id,
                opening: c.opening,
                lambda: GammaParams {
                    shape: alpha + T::count(c.n),
                    rate: beta + c.tau,
                },
                r: psi.map(|p| BetaParams {
                    a: p.a + T::count(x),
                    b: p.b + T::count(m - x),
                }),
                theta: theta_prior.map(|g| GammaParams {
                    shape: g.shape + T::count(c.l),
                    rate: g.rate + c.t_screen_sum,
                }),
            }
        })
        .collect();

    Ok(FittedModel {
        model,
        t1: snap.t1,
        screening_window: snap.screening_window,
        alpha,
        mu,
        r_hat,
        theta_hat,
        psi,
        theta_prior,
        centres,
        loglik,
        diagnostics: fx.diagnostics,
        warnings: fx.warnings,
    })
}
