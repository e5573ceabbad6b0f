//! Maximum-likelihood fitting of the recruitment and dropout parameters.

mod fit;
pub mod likelihood;
pub mod optimize;

pub use fit::{fit, BlockDiagnostics, CentrePosterior, FitDiagnostics, FittedModel};
pub use likelihood::{
    estimate_r_pooled, estimate_theta_pooled, grad_beta_binomial, grad_recruitment,
    grad_theta_prior, loglik_beta_binomial, loglik_pooled_r, loglik_pooled_theta,
    loglik_recruitment, loglik_theta_prior,
};
pub use optimize::{maximize_2d, Maximum, OptimizerSettings};
