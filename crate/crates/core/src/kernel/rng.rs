//! Reproducible random streams and the elementary samplers.
//!
//! A [`RngHandle`] is a plain `(seed, stream_id)` value. Each handle opens an
//! independent ChaCha8 stream, and [`RngHandle::child`] derives sub-streams
//! keyed by an index (replication, centre, path block, ...), so results never
//! depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use super::dist::{BetaParams, GammaParams};
use crate::error::{Error, Result};

/// The concrete generator behind every handle.
pub type Stream = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngHandle {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngHandle {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Derives the sub-stream identified by `key`.
    pub fn child(&self, key: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(key.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    /// Opens the generator for this handle, positioned at its start.
    pub fn stream(&self) -> Stream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

pub fn sample_gamma<R: Rng + ?Sized>(p: &GammaParams<f64>, rng: &mut R) -> Result<f64> {
    let d = gamma_sampler(p)?;
    Ok(d.sample(rng))
}

/// Pre-validated gamma sampler for repeated draws. Marsaglia–Tsang with the
/// boosting step for shape < 1, so it is exact for every positive shape.
pub(crate) fn gamma_sampler(p: &GammaParams<f64>) -> Result<Gamma<f64>> {
    Gamma::new(p.shape, 1.0 / p.rate)
        .map_err(|e| Error::domain("sample_gamma", format!("{e:?} for {p:?}")))
}

pub(crate) fn beta_sampler(p: &BetaParams<f64>) -> Result<Beta<f64>> {
    Beta::new(p.a, p.b).map_err(|e| Error::domain("sample_beta", format!("{e:?} for {p:?}")))
}

pub fn sample_beta<R: Rng + ?Sized>(p: &BetaParams<f64>, rng: &mut R) -> Result<f64> {
    Ok(beta_sampler(p)?.sample(rng))
}

pub fn sample_exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64> {
    let d = Exp::new(rate)
        .ok()
        .filter(|_| rate > 0.0 && rate.is_finite())
        .ok_or_else(|| Error::domain("sample_exponential", format!("rate must be > 0, got {rate}")))?;
    Ok(d.sample(rng))
}

pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::domain(
            "sample_poisson",
            format!("mean must be finite and >= 0, got {mean}"),
        ));
    }
    Ok(poisson_draw(mean, rng))
}

/// Poisson draw for a mean already known to be finite and non-negative.
#[inline]
pub(crate) fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("validated Poisson mean");
    d.sample(rng) as u64
}

pub fn sample_bernoulli<R: Rng + ?Sized>(prob: f64, rng: &mut R) -> Result<bool> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::domain(
            "sample_bernoulli",
            format!("probability must lie in [0, 1], got {prob}"),
        ));
    }
    Ok(bernoulli_draw(prob, rng))
}

#[inline]
pub(crate) fn bernoulli_draw<R: Rng + ?Sized>(prob: f64, rng: &mut R) -> bool {
    // `random::<f64>()` lies in [0, 1), so prob = 0 never fires and prob = 1 always does.
    rng.random::<f64>() < prob
}
