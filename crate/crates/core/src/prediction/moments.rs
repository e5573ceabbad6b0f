//! Conditional mean and variance of the randomized-patient count beyond the
//! interim time.
//!
//! Per centre the future count is `k + S + Π(u·W·λ)` where `S` counts the
//! pending patients who end up randomized, `W = r·e^{−θR}` is the probability
//! that a new arrival is randomized, `u` the time elapsed since new arrivals
//! started producing randomizations, and `λ`, `r`, `θ` are drawn from their
//! posteriors. The variance below is the exact law-of-total-variance
//! decomposition, including the covariance between `S` and `W` that appears
//! when `r` or `θ` is random.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::FittedModel;
use crate::kernel::{BetaParams, GammaParams};
use crate::scalar::Real;
use crate::snapshot::InterimSnapshot;
use crate::trial::ModelTag;

/// Gamma posterior of a screening-dropout rate, viewed through its Laplace
/// transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacePosterior<T> {
    pub alpha_post: T,
    pub rate_post: T,
}

impl<T: Real> LaplacePosterior<T> {
    pub fn new(alpha_post: T, rate_post: T) -> Result<Self> {
        GammaParams::new(alpha_post, rate_post)?;
        Ok(Self {
            alpha_post,
            rate_post,
        })
    }
}

impl<T: Real> From<GammaParams<T>> for LaplacePosterior<T> {
    fn from(g: GammaParams<T>) -> Self {
        Self {
            alpha_post: g.shape,
            rate_post: g.rate,
        }
    }
}

/// F(s) = E[e^{−θs}] = (1 + s/rate)^{−shape}.
pub fn laplace_f<T: Real>(lp: &LaplacePosterior<T>, s: T) -> Result<T> {
    if !(s >= T::zero()) {
        return Err(Error::domain("laplace_f", format!("s must be >= 0, got {s}")));
    }
    Ok((-lp.alpha_post * (s / lp.rate_post).ln_1p()).exp())
}

/// Randomization probability of a centre: fixed or beta-distributed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RPosterior<T> {
    Point(T),
    Beta(BetaParams<T>),
}

impl<T: Real> RPosterior<T> {
    pub fn mean(&self) -> T {
        match self {
            Self::Point(r) => *r,
            Self::Beta(b) => b.mean(),
        }
    }

    pub fn second_moment(&self) -> T {
        match self {
            Self::Point(r) => *r * *r,
            Self::Beta(b) => b.second_moment(),
        }
    }

    pub fn variance(&self) -> T {
        match self {
            Self::Point(_) => T::zero(),
            Self::Beta(b) => b.variance(),
        }
    }
}

/// Screening-dropout rate of a centre: absent (instant-dropout models),
/// fixed, or gamma-distributed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThetaPosterior<T> {
    Absent,
    Point(T),
    Gamma(LaplacePosterior<T>),
}

impl<T: Real> ThetaPosterior<T> {
    /// E[e^{−θs}] for s ≥ 0.
    pub fn laplace(&self, s: T) -> T {
        match self {
            Self::Absent => T::one(),
            Self::Point(th) => (-*th * s).exp(),
            Self::Gamma(lp) => (-lp.alpha_post * (s / lp.rate_post).ln_1p()).exp(),
        }
    }
}

/// Everything the forecast needs about one centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentrePredictive<T> {
    pub centre_id: usize,
    pub opening: T,
    pub k: u64,
    pub lambda: GammaParams<T>,
    pub r: RPosterior<T>,
    pub theta: ThetaPosterior<T>,
    pub pending: Vec<T>,
}

/// The posterior predictive model of the whole trial after `t1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictive<T> {
    pub model: ModelTag,
    pub t1: T,
    pub screening_window: T,
    pub centres: Vec<CentrePredictive<T>>,
}

impl<T: Real> Predictive<T> {
    /// Pairs a fitted model with the snapshot it was fitted on.
    pub fn new(fm: &FittedModel<T>, snap: &InterimSnapshot<T>) -> Result<Self> {
        if fm.centres.len() != snap.centres.len() {
            return Err(Error::DataMismatch(format!(
                "fitted model has {} centres, data have {}",
                fm.centres.len(),
                snap.centres.len()
            )));
        }
        let tol = T::lit(1e-9);
        if (fm.t1 - snap.t1).abs() > tol || (fm.screening_window - snap.screening_window).abs() > tol {
            return Err(Error::DataMismatch(format!(
                "fitted at t1 = {}, R = {} but data are at t1 = {}, R = {}",
                fm.t1, fm.screening_window, snap.t1, snap.screening_window
            )));
        }
        let centres = fm
            .centres
            .iter()
            .zip(&snap.centres)
            .map(|(post, c)| {
                if post.centre_id != c.centre_id {
                    return Err(Error::DataMismatch(format!(
                        "centre order differs: {} vs {}",
                        post.centre_id, c.centre_id
                    )));
                }
                let r = match (post.r, fm.r_hat) {
                    (Some(b), _) => RPosterior::Beta(b),
                    (None, Some(r)) => RPosterior::Point(r),
                    (None, None) => {
                        return Err(Error::DataMismatch(format!(
                            "fitted model lacks a randomization probability for centre {}",
                            c.centre_id
                        )))
                    }
                };
                let theta = match (post.theta, fm.theta_hat) {
                    (Some(g), _) => ThetaPosterior::Gamma(g.into()),
                    (None, Some(th)) => ThetaPosterior::Point(th),
                    (None, None) if fm.model.has_screening() => {
                        return Err(Error::DataMismatch(format!(
                            "fitted model lacks a screening-dropout rate for centre {}",
                            c.centre_id
                        )))
                    }
                    (None, None) => ThetaPosterior::Absent,
                };
                Ok(CentrePredictive {
                    centre_id: c.centre_id,
                    opening: c.opening,
                    k: c.k,
                    lambda: post.lambda,
                    r,
                    theta,
                    pending: c.pending_arrivals.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model: fm.model,
            t1: fm.t1,
            screening_window: fm.screening_window,
            centres,
        })
    }

    /// Randomized patients already observed, Σ k_i.
    pub fn observed(&self) -> u64 {
        self.centres.iter().map(|c| c.k).sum()
    }

    /// Time from which new arrivals at centre `c` can be randomized.
    pub fn flow_start(&self, c: &CentrePredictive<T>) -> T {
        self.t1.max(c.opening) + self.screening_window
    }

    /// Expected total rate of new randomizations once every centre flows.
    pub fn expected_rate(&self) -> T {
        let r = self.screening_window;
        self.centres
            .iter()
            .map(|c| c.r.mean() * c.theta.laplace(r) * c.lambda.mean())
            .sum()
    }

    /// Moments at any `t ≥ t1`, including the bridge interval (t1, t1+R].
    pub fn moments_at(&self, t: T) -> Result<PredictiveMoments<T>> {
        if !(t >= self.t1) || !t.is_finite() {
            return Err(Error::domain(
                "predictive_moments",
                format!("t = {t} precedes the interim time {}", self.t1),
            ));
        }
        let (mut mean, mut variance) = (T::zero(), T::zero());
        for c in &self.centres {
            let (m, v) = self.centre_moments(c, t);
            mean = mean + m;
            variance = variance + v;
        }
        Ok(PredictiveMoments {
            t,
            mean,
            variance: variance.max(T::zero()),
            floor: T::count(self.observed()),
        })
    }

    fn centre_moments(&self, c: &CentrePredictive<T>, t: T) -> (T, T) {
        let big_r = self.screening_window;
        let u = (t - self.flow_start(c)).max(T::zero());
        let (el, el2) = (c.lambda.mean(), c.lambda.second_moment());
        let (er, er2, vr) = (c.r.mean(), c.r.second_moment(), c.r.variance());

        let (ew, ew2, es, var_s, cov) = if self.model.has_screening() {
            let f = |s: T| c.theta.laplace(s);
            let fr = f(big_r);
            let deltas: Vec<T> = c
                .pending
                .iter()
                .filter(|&&a| a + big_r <= t)
                .map(|&a| (a + big_r - self.t1).max(T::zero()))
                .collect();
            let fd: Vec<T> = deltas.iter().map(|&d| f(d)).collect();
            let mut es = T::zero();
            let mut var_s = T::zero();
            let mut cov = T::zero();
            for (i, &di) in deltas.iter().enumerate() {
                es = es + fd[i];
                var_s = var_s + fd[i] - f(di + di);
                for (j, &dj) in deltas.iter().enumerate() {
                    var_s = var_s + f(di + dj) - fd[i] * fd[j];
                }
                cov = cov + f(di + big_r) - fd[i] * fr;
            }
            (er * fr, er2 * f(big_r + big_r), es, var_s, er * cov)
        } else {
            let nu = T::count(c.pending.len() as u64);
            let q = if big_r > T::zero() {
                ((t - self.t1) / big_r).min(T::one())
            } else {
                T::one()
            };
            let es = nu * q * er;
            let var_s = nu * (q * er - q * q * er2) + nu * nu * q * q * vr;
            (er, er2, es, var_s, nu * q * vr)
        };

        let flow = u * ew * el;
        let mean = T::count(c.k) + es + flow;
        let var = var_s + flow + u * u * (ew2 * el2 - ew * el * ew * el) + T::lit(2.0) * u * el * cov;
        (mean, var)
    }
}

/// Conditional mean and variance of the total randomized count at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveMoments<T> {
    pub t: T,
    pub mean: T,
    pub variance: T,
    /// Randomized patients already observed; no forecast can go below it.
    pub floor: T,
}

impl<T: Real> PredictiveMoments<T> {
    pub fn sd(&self) -> T {
        self.variance.sqrt()
    }
}

/// Predictive moments of the randomized count at `t > t1 + R`.
pub fn predictive_moments<T: Real>(
    fm: &FittedModel<T>,
    snap: &InterimSnapshot<T>,
    t: T,
) -> Result<PredictiveMoments<T>> {
    let p = Predictive::new(fm, snap)?;
    if !(t > p.t1 + p.screening_window) {
        return Err(Error::domain(
            "predictive_moments",
            format!(
                "t = {t} must exceed t1 + R = {}; simulate paths for the bridge interval",
                p.t1 + p.screening_window
            ),
        ));
    }
    p.moments_at(t)
}

/// Two-sided normal quantile z_{1−δ/2}.
pub(crate) fn normal_z(delta: f64) -> Result<f64> {
    use statrs::distribution::{ContinuousCDF, Normal};
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain("predictive_bounds", format!("δ must lie in (0, 1), got {delta}")));
    }
    Ok(Normal::standard().inverse_cdf(1.0 - delta / 2.0))
}

pub(crate) fn normal_cdf(x: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().cdf(x)
}

/// Unrounded normal interval `mean ± z·sd`.
pub fn normal_interval<T: Real>(m: &PredictiveMoments<T>, delta: f64) -> Result<(T, T)> {
    let half = T::lit(normal_z(delta)?) * m.sd();
    Ok((m.mean - half, m.mean + half))
}

/// (1−δ) predictive bounds: the normal interval floored at the observed
/// count and rounded outward to integers.
pub fn predictive_bounds<T: Real>(m: &PredictiveMoments<T>, delta: f64) -> Result<(T, T)> {
    let (lo, hi) = normal_interval(m, delta)?;
    let lo = lo.max(m.floor).floor();
    let hi = hi.max(m.floor).ceil();
    Ok((lo, hi))
}
