//! Log-gamma, log-beta and digamma.
//!
//! Small arguments are shifted upward with the recurrence Γ(x+1) = xΓ(x)
//! until the Stirling series is accurate to machine precision.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Arguments below this are shifted before the asymptotic series is used.
const SHIFT_TO: f64 = 15.0;

/// Coefficients B_{2k} / (2k (2k-1)) of the Stirling series for ln Γ.
const STIRLING: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
];

/// Coefficients B_{2k} / (2k) of the asymptotic series for ψ.
const DIGAMMA: [f64; 6] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32_760.0,
];

fn check_positive<T: Real>(func: &'static str, x: T) -> Result<()> {
    if x.is_finite() && x > T::zero() {
        Ok(())
    } else {
        Err(Error::domain(func, format!("argument must be finite and > 0, got {x}")))
    }
}

/// Stirling series for z ≥ `SHIFT_TO`.
fn ln_gamma_asymptotic<T: Real>(z: T) -> T {
    let half = T::lit(0.5);
    let ln_sqrt_2pi = T::lit(0.918_938_533_204_672_7);
    let zinv = z.recip();
    let zinv2 = zinv * zinv;
    // Horner in 1/z² from the highest-order term down.
    let mut series = T::zero();
    for &c in STIRLING.iter().rev() {
        series = series * zinv2 + T::lit(c);
    }
    (z - half) * z.ln() - z + ln_sqrt_2pi + series * zinv
}

/// Natural log of the gamma function, ln Γ(x), for finite x > 0.
pub fn ln_gamma<T: Real>(x: T) -> Result<T> {
    check_positive("ln_gamma", x)?;
    Ok(ln_gamma_unchecked(x))
}

/// [`ln_gamma`] without the domain check, for hot loops whose arguments
/// are positive by construction.
#[inline]
pub(crate) fn ln_gamma_unchecked<T: Real>(x: T) -> T {
    let shift_to = T::lit(SHIFT_TO);
    if x >= shift_to {
        return ln_gamma_asymptotic(x);
    }
    let mut z = x;
    let mut prod = T::one();
    while z < shift_to {
        prod = prod * z;
        z = z + T::one();
    }
    ln_gamma_asymptotic(z) - prod.ln()
}

/// Natural log of the beta function, ln B(a, b) = ln Γ(a) + ln Γ(b) − ln Γ(a+b).
pub fn ln_beta<T: Real>(a: T, b: T) -> Result<T> {
    check_positive("ln_beta", a)?;
    check_positive("ln_beta", b)?;
    Ok(ln_beta_unchecked(a, b))
}

#[inline]
pub(crate) fn ln_beta_unchecked<T: Real>(a: T, b: T) -> T {
    ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(a + b)
}

/// ln k! for a non-negative integer k.
pub fn ln_factorial<T: Real>(k: u64) -> T {
    ln_gamma_unchecked(T::count(k) + T::one())
}

/// Digamma function ψ(x) = d/dx ln Γ(x) for finite x > 0.
pub fn digamma<T: Real>(x: T) -> Result<T> {
    check_positive("digamma", x)?;
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked<T: Real>(x: T) -> T {
    let shift_to = T::lit(SHIFT_TO);
    let mut z = x;
    let mut acc = T::zero();
    while z < shift_to {
        acc = acc - z.recip();
        z = z + T::one();
    }
    let zinv2 = (z * z).recip();
    let mut series = T::zero();
    for &c in DIGAMMA.iter().rev() {
        series = series * zinv2 + T::lit(c);
    }
    acc + z.ln() - T::lit(0.5) / z - series * zinv2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gamma_of_one_and_two_is_one() {
        assert_abs_diff_eq!(ln_gamma(1.0f64).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ln_gamma(2.0f64).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn factorials() {
        let mut ln_fact = 0.0f64;
        for k in 1..=30u64 {
            ln_fact += (k as f64).ln();
            assert_abs_diff_eq!(ln_factorial::<f64>(k), ln_fact, epsilon = 1e-12);
        }
    }

    #[test]
    fn half_integer() {
        // Γ(1/2) = √π
        let expected = std::f64::consts::PI.sqrt().ln();
        assert_abs_diff_eq!(ln_gamma(0.5f64).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn beta_closed_forms() {
        assert_abs_diff_eq!(ln_beta(1.0f64, 1.0).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ln_beta(2.0f64, 1.0).unwrap(), 0.5f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(ln_beta(4.0f64, 1.0).unwrap(), 0.25f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn digamma_known_values() {
        // ψ(1) = −γ, ψ(1/2) = −γ − 2 ln 2
        let euler = 0.577_215_664_901_532_9;
        assert_abs_diff_eq!(digamma(1.0f64).unwrap(), -euler, epsilon = 1e-13);
        assert_abs_diff_eq!(
            digamma(0.5f64).unwrap(),
            -euler - 2.0 * 2f64.ln(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(ln_gamma(0.0f64).is_err());
        assert!(ln_gamma(-1.0f64).is_err());
        assert!(ln_gamma(f64::NAN).is_err());
        assert!(ln_gamma(f64::INFINITY).is_err());
        assert!(ln_beta(1.0f64, 0.0).is_err());
        assert!(digamma(-0.5f64).is_err());
    }

    #[test]
    fn single_precision() {
        assert!((ln_gamma(5.0f32).unwrap() - 24f32.ln()).abs() < 1e-5);
    }
}
