//! Log-likelihood blocks of the interim data and their closed-form maximisers.
//!
//! Every block is written up to an additive constant that does not depend
//! on its parameters. Centres that are not yet open contribute nothing.

use crate::error::{Error, Result};
use crate::kernel::special::{digamma_unchecked, ln_beta_unchecked, ln_gamma_unchecked};
use crate::scalar::Real;
use crate::snapshot::{CentreSnapshot, InterimSnapshot};

fn check_positive<T: Real>(func: &'static str, a: T, b: T) -> Result<()> {
    if a.is_finite() && b.is_finite() && a > T::zero() && b > T::zero() {
        Ok(())
    } else {
        Err(Error::domain(func, format!("parameters must be finite and > 0, got ({a}, {b})")))
    }
}

/// Binomial data `(successes, trials)` of a centre for the randomization
/// probability.
///
/// With `use_tilde` the successes are the patients not lost upon arrival out
/// of all arrivals (screening models). Otherwise they are the randomized
/// patients out of those whose outcome is known, which equals all arrivals
/// when there is no screening delay.
pub fn binomial_counts<T: Real>(c: &CentreSnapshot<T>, use_tilde: bool) -> (u64, u64) {
    if use_tilde {
        (c.k_tilde, c.n)
    } else {
        (c.k, c.resolved())
    }
}

/// Poisson-gamma recruitment log-likelihood in the mean parametrisation:
/// Σ ln Γ(n_i+α) − M ln Γ(α) + N (ln μ − ln α) − Σ (n_i+α) ln(1 + μτ_i/α).
pub fn loglik_recruitment<T: Real>(alpha: T, mu: T, snap: &InterimSnapshot<T>) -> Result<T> {
    check_positive("loglik_recruitment", alpha, mu)?;
    Ok(recruitment_unchecked(alpha, mu, snap))
}

pub(crate) fn recruitment_unchecked<T: Real>(alpha: T, mu: T, snap: &InterimSnapshot<T>) -> T {
    let ln_ga = ln_gamma_unchecked(alpha);
    let ln_ratio = mu.ln() - alpha.ln();
    let mut total = T::zero();
    for c in snap.open_centres() {
        let n = T::count(c.n);
        total = total + ln_gamma_unchecked(n + alpha) - ln_ga + n * ln_ratio
            - (n + alpha) * (mu * c.tau / alpha).ln_1p();
    }
    total
}

/// Gradient of [`loglik_recruitment`] with respect to `(α, μ)`.
pub fn grad_recruitment<T: Real>(alpha: T, mu: T, snap: &InterimSnapshot<T>) -> Result<(T, T)> {
    check_positive("grad_recruitment", alpha, mu)?;
    let psi_a = digamma_unchecked(alpha);
    let (mut ga, mut gm) = (T::zero(), T::zero());
    for c in snap.open_centres() {
        let n = T::count(c.n);
        let mt = mu * c.tau;
        ga = ga + digamma_unchecked(n + alpha) - psi_a - n / alpha - (mt / alpha).ln_1p()
            + (n + alpha) * mt / (alpha * (alpha + mt));
        gm = gm + n / mu - (n + alpha) * c.tau / (alpha + mt);
    }
    Ok((ga, gm))
}

/// Beta-binomial log-likelihood Σ [ln B(x_i+ψ₁, m_i−x_i+ψ₂) − ln B(ψ₁, ψ₂)]
/// with `(x_i, m_i)` from [`binomial_counts`].
pub fn loglik_beta_binomial<T: Real>(
    psi1: T,
    psi2: T,
    snap: &InterimSnapshot<T>,
    use_tilde: bool,
) -> Result<T> {
    check_positive("loglik_beta_binomial", psi1, psi2)?;
    Ok(beta_binomial_unchecked(psi1, psi2, snap, use_tilde))
}

pub(crate) fn beta_binomial_unchecked<T: Real>(
    psi1: T,
    psi2: T,
    snap: &InterimSnapshot<T>,
    use_tilde: bool,
) -> T {
    let ln_b = ln_beta_unchecked(psi1, psi2);
    let mut total = T::zero();
    for c in snap.open_centres() {
        let (x, m) = binomial_counts(c, use_tilde);
        if m == 0 {
            continue;
        }
        total = total + ln_beta_unchecked(T::count(x) + psi1, T::count(m - x) + psi2) - ln_b;
    }
    total
}

/// Gradient of [`loglik_beta_binomial`] with respect to `(ψ₁, ψ₂)`.
pub fn grad_beta_binomial<T: Real>(
    psi1: T,
    psi2: T,
    snap: &InterimSnapshot<T>,
    use_tilde: bool,
) -> Result<(T, T)> {
    check_positive("grad_beta_binomial", psi1, psi2)?;
    let base = digamma_unchecked(psi1 + psi2);
    let (d1, d2) = (digamma_unchecked(psi1), digamma_unchecked(psi2));
    let (mut g1, mut g2) = (T::zero(), T::zero());
    for c in snap.open_centres() {
        let (x, m) = binomial_counts(c, use_tilde);
        if m == 0 {
            continue;
        }
        let tot = digamma_unchecked(T::count(m) + psi1 + psi2);
        g1 = g1 + digamma_unchecked(T::count(x) + psi1) - tot - d1 + base;
        g2 = g2 + digamma_unchecked(T::count(m - x) + psi2) - tot - d2 + base;
    }
    Ok((g1, g2))
}

/// Marginal log-likelihood of the screening-dropout prior Ga(α₂, β₂):
/// Σ [ln Γ(l_i+α₂) − ln Γ(α₂) + α₂ ln β₂ − (l_i+α₂) ln(β₂+T_i)].
pub fn loglik_theta_prior<T: Real>(alpha2: T, beta2: T, snap: &InterimSnapshot<T>) -> Result<T> {
    check_positive("loglik_theta_prior", alpha2, beta2)?;
    Ok(theta_prior_unchecked(alpha2, beta2, snap))
}

pub(crate) fn theta_prior_unchecked<T: Real>(alpha2: T, beta2: T, snap: &InterimSnapshot<T>) -> T {
    let ln_ga = ln_gamma_unchecked(alpha2);
    let ln_b = beta2.ln();
    let mut total = T::zero();
    for c in snap.open_centres() {
        // A centre with nobody observed in screening has T_i = 0 and l_i = 0:
        // its term vanishes identically.
        if c.t_screen_sum <= T::zero() {
            continue;
        }
        let l = T::count(c.l);
        total = total + ln_gamma_unchecked(l + alpha2) - ln_ga + alpha2 * ln_b
            - (l + alpha2) * (beta2 + c.t_screen_sum).ln();
    }
    total
}

/// Gradient of [`loglik_theta_prior`] with respect to `(α₂, β₂)`.
pub fn grad_theta_prior<T: Real>(alpha2: T, beta2: T, snap: &InterimSnapshot<T>) -> Result<(T, T)> {
    check_positive("grad_theta_prior", alpha2, beta2)?;
    let psi_a = digamma_unchecked(alpha2);
    let (mut ga, mut gb) = (T::zero(), T::zero());
    for c in snap.open_centres() {
        if c.t_screen_sum <= T::zero() {
            continue;
        }
        let l = T::count(c.l);
        ga = ga + digamma_unchecked(l + alpha2) - psi_a + beta2.ln() - (beta2 + c.t_screen_sum).ln();
        gb = gb + alpha2 / beta2 - (l + alpha2) / (beta2 + c.t_screen_sum);
    }
    Ok((ga, gb))
}

/// Binomial block Σ [x_i ln r + (m_i − x_i) ln(1 − r)] for a shared `r`.
pub fn loglik_pooled_r<T: Real>(r: T, snap: &InterimSnapshot<T>, use_tilde: bool) -> Result<T> {
    if !(r >= T::zero() && r <= T::one()) {
        return Err(Error::domain("loglik_pooled_r", format!("r must lie in [0, 1], got {r}")));
    }
    let xlogy = |x: T, y: T| if x == T::zero() { T::zero() } else { x * y.ln() };
    let mut total = T::zero();
    for c in snap.open_centres() {
        let (x, m) = binomial_counts(c, use_tilde);
        total = total + xlogy(T::count(x), r) + xlogy(T::count(m - x), T::one() - r);
    }
    Ok(total)
}

/// Exponential-censoring block Σ [l_i ln θ − θ T_i] for a shared `θ`.
pub fn loglik_pooled_theta<T: Real>(theta: T, snap: &InterimSnapshot<T>) -> Result<T> {
    if !(theta >= T::zero() && theta.is_finite()) {
        return Err(Error::domain("loglik_pooled_theta", format!("θ must be >= 0, got {theta}")));
    }
    let mut total = T::zero();
    for c in snap.open_centres() {
        let l = T::count(c.l);
        if c.l > 0 {
            total = total + l * theta.ln();
        }
        total = total - theta * c.t_screen_sum;
    }
    Ok(total)
}

/// Pooled maximum-likelihood randomization probability Σ x_i / Σ m_i.
pub fn estimate_r_pooled<T: Real>(snap: &InterimSnapshot<T>, use_tilde: bool) -> Result<T> {
    let (x, m) = snap
        .open_centres()
        .map(|c| binomial_counts(c, use_tilde))
        .fold((0u64, 0u64), |(sx, sm), (x, m)| (sx + x, sm + m));
    if m == 0 {
        return Err(Error::InsufficientData {
            block: "r",
            detail: "no patients with a known randomization outcome".into(),
        });
    }
    Ok(T::count(x) / T::count(m))
}

/// Pooled maximum-likelihood screening-dropout rate Σ l_i / Σ T_i.
pub fn estimate_theta_pooled<T: Real>(snap: &InterimSnapshot<T>) -> Result<T> {
    let l: u64 = snap.open_centres().map(|c| c.l).sum();
    let t: T = snap.open_centres().map(|c| c.t_screen_sum).sum();
    if !(t > T::zero()) {
        return Err(Error::InsufficientData {
            block: "theta",
            detail: "total observed screening time is zero".into(),
        });
    }
    Ok(T::count(l) / t)
}
