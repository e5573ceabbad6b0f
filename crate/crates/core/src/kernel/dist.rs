//! Parametric families used by the recruitment and dropout models.

use serde::{Deserialize, Serialize};

use super::special::{ln_beta_unchecked, ln_gamma_unchecked};
use crate::error::{Error, Result};
use crate::scalar::Real;

fn positive<T: Real>(func: &'static str, name: &str, v: T) -> Result<()> {
    if v.is_finite() && v > T::zero() {
        Ok(())
    } else {
        Err(Error::domain(func, format!("{name} must be finite and > 0, got {v}")))
    }
}

/// Gamma distribution in shape/rate form, density β^α x^{α−1} e^{−βx} / Γ(α).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams<T> {
    pub shape: T,
    pub rate: T,
}

impl<T: Real> GammaParams<T> {
    pub fn new(shape: T, rate: T) -> Result<Self> {
        positive("GammaParams", "shape", shape)?;
        positive("GammaParams", "rate", rate)?;
        Ok(Self { shape, rate })
    }

    /// Builds the gamma law with the given shape and mean (rate = shape / mean).
    pub fn from_shape_mean(shape: T, mean: T) -> Result<Self> {
        positive("GammaParams", "mean", mean)?;
        Self::new(shape, shape / mean)
    }

    pub fn mean(&self) -> T {
        self.shape / self.rate
    }

    pub fn variance(&self) -> T {
        self.shape / (self.rate * self.rate)
    }

    /// E[X²] = α(α+1)/β².
    pub fn second_moment(&self) -> T {
        self.shape * (self.shape + T::one()) / (self.rate * self.rate)
    }

    pub fn ln_pdf(&self, x: T) -> T {
        if x <= T::zero() {
            return T::neg_infinity();
        }
        self.shape * self.rate.ln() - ln_gamma_unchecked(self.shape)
            + (self.shape - T::one()) * x.ln()
            - self.rate * x
    }

    /// Laplace transform E[e^{−sX}] = (1 + s/β)^{−α}.
    pub fn laplace(&self, s: T) -> T {
        (-self.shape * (s / self.rate).ln_1p()).exp()
    }
}

/// Beta distribution on (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams<T> {
    pub a: T,
    pub b: T,
}

impl<T: Real> BetaParams<T> {
    pub fn new(a: T, b: T) -> Result<Self> {
        positive("BetaParams", "a", a)?;
        positive("BetaParams", "b", b)?;
        Ok(Self { a, b })
    }

    pub fn mean(&self) -> T {
        self.a / (self.a + self.b)
    }

    pub fn variance(&self) -> T {
        let s = self.a + self.b;
        self.a * self.b / (s * s * (s + T::one()))
    }

    /// E[X²] = a(a+1) / ((a+b)(a+b+1)).
    pub fn second_moment(&self) -> T {
        let s = self.a + self.b;
        self.a * (self.a + T::one()) / (s * (s + T::one()))
    }

    pub fn ln_pdf(&self, x: T) -> T {
        if x <= T::zero() || x >= T::one() {
            return T::neg_infinity();
        }
        (self.a - T::one()) * x.ln() + (self.b - T::one()) * (-x).ln_1p()
            - ln_beta_unchecked(self.a, self.b)
    }
}

/// Negative binomial law NegBin(k; α, π) = Γ(α+k)/(k! Γ(α)) π^k (1−π)^α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegBinParams<T> {
    pub shape: T,
    pub success_prob: T,
}

impl<T: Real> NegBinParams<T> {
    pub fn new(shape: T, success_prob: T) -> Result<Self> {
        positive("NegBinParams", "shape", shape)?;
        if !(success_prob > T::zero() && success_prob < T::one()) {
            return Err(Error::domain(
                "NegBinParams",
                format!("success_prob must lie in (0, 1), got {success_prob}"),
            ));
        }
        Ok(Self {
            shape,
            success_prob,
        })
    }

    /// Marginal count law of a Poisson process observed for `tau` whose rate
    /// is Ga(α, α/μ): π = μτ / (α + μτ).
    pub fn from_poisson_gamma(alpha: T, mu: T, tau: T) -> Result<Self> {
        positive("NegBinParams", "mu", mu)?;
        positive("NegBinParams", "tau", tau)?;
        Self::new(alpha, mu * tau / (alpha + mu * tau))
    }

    pub fn mean(&self) -> T {
        self.shape * self.success_prob / (T::one() - self.success_prob)
    }
}

/// ln NegBin(k; α, π).
pub fn negbin_log_pmf<T: Real>(k: u64, p: &NegBinParams<T>) -> T {
    let kk = T::count(k);
    let mut v = ln_gamma_unchecked(p.shape + kk)
        - ln_gamma_unchecked(kk + T::one())
        - ln_gamma_unchecked(p.shape)
        + p.shape * (-p.success_prob).ln_1p();
    if k > 0 {
        v = v + kk * p.success_prob.ln();
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn negbin_zero_count() {
        let p = NegBinParams::new(1.2f64, 0.5).unwrap();
        assert_abs_diff_eq!(negbin_log_pmf(0, &p), 1.2 * 0.5f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn negbin_geometric_case() {
        let p = NegBinParams::new(1.0f64, 0.5).unwrap();
        assert_abs_diff_eq!(negbin_log_pmf(3, &p), 0.0625f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn negbin_rejects_bad_params() {
        assert!(NegBinParams::new(0.0f64, 0.5).is_err());
        assert!(NegBinParams::new(1.0f64, 1.0).is_err());
        assert!(NegBinParams::new(1.0f64, 0.0).is_err());
        assert!(NegBinParams::new(1.0f64, f64::NAN).is_err());
    }

    #[test]
    fn gamma_moments_and_laplace() {
        let g = GammaParams::from_shape_mean(1.2f64, 3.5).unwrap();
        assert_abs_diff_eq!(g.mean(), 3.5, epsilon = 1e-14);
        assert_abs_diff_eq!(g.variance(), 3.5 * 3.5 / 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(g.laplace(0.0), 1.0, epsilon = 1e-15);
        let h = GammaParams::new(1.0f64, 0.5).unwrap();
        assert_abs_diff_eq!(h.laplace(0.2), 1.0 / 1.4, epsilon = 1e-15);
    }

    #[test]
    fn beta_moments() {
        let b = BetaParams::new(4.0f64, 1.0).unwrap();
        assert_abs_diff_eq!(b.mean(), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(b.variance(), 4.0 / (25.0 * 6.0), epsilon = 1e-15);
        assert_abs_diff_eq!(
            b.second_moment(),
            b.variance() + b.mean() * b.mean(),
            epsilon = 1e-15
        );
        assert!(BetaParams::new(-1.0f64, 1.0).is_err());
    }
}
