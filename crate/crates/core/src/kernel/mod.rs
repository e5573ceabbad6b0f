//! Special functions, distributions and random sampling.

pub mod dist;
pub mod rng;
pub mod special;

pub use dist::{negbin_log_pmf, BetaParams, GammaParams, NegBinParams};
pub use rng::{
    sample_bernoulli, sample_beta, sample_exponential, sample_gamma, sample_poisson, RngHandle,
    Stream,
};
pub use special::{digamma, ln_beta, ln_factorial, ln_gamma};
