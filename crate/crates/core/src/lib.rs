//! Patient recruitment in multicentre clinical trials with dropout.
//!
//! Patients arrive at each centre as a Poisson process whose rate is drawn
//! from a gamma population (the Poisson-gamma model). Patients may be lost on
//! arrival, or during a fixed screening window, under five dropout models
//! (A.1, A.2, B.1, B.2, B.3). The crate simulates such trials, estimates the
//! population parameters from interim data, re-projects per-centre rates by
//! empirical Bayes, and forecasts the randomized-patient process and the
//! time to reach the recruitment target.
//!
//! The numeric core is generic over [`Real`] (`f32`/`f64`); the aliases below
//! fix the scalar to `f64`, which is what the simulation layer uses.

pub mod error;
pub mod estimation;
pub mod kernel;
pub mod prediction;
pub mod scalar;
pub mod snapshot;
pub mod study;
pub mod trial;

pub use error::{Error, Result};
pub use scalar::Real;

pub use estimation::{fit, FitDiagnostics, FittedModel, OptimizerSettings};
pub use kernel::RngHandle;
pub use prediction::{
    predictive_bounds, predictive_moments, recruitment_time_forecast, simulate_predictive_paths,
    ForecastMethod, ForecastResult, ForecastSettings, PathEnsemble,
};
pub use snapshot::{take_snapshot, PatientTable};
pub use study::{run_study, StudyPlan, StudyReport};
pub use trial::{
    classify_patient, generate_trial, recruitment_stop_time, DropoutSpec, ModelTag, Status, Trial,
    TrialConfig,
};

pub type Gamma = kernel::GammaParams<f64>;
pub type Beta = kernel::BetaParams<f64>;
pub type NegBin = kernel::NegBinParams<f64>;
pub type Snapshot = snapshot::InterimSnapshot<f64>;
pub type CentreSnapshot = snapshot::CentreSnapshot<f64>;
pub type Fitted = estimation::FittedModel<f64>;
pub type Moments = prediction::PredictiveMoments<f64>;
