//! Posterior predictive forecasts of the randomized-patient count and of the
//! time to reach the recruitment target.

mod forecast;
mod moments;
mod paths;

pub use forecast::{
    default_horizon, recruitment_time_forecast, ForecastMethod, ForecastResult, ForecastSettings,
    GridRow, TimeSummary,
};
pub use moments::{
    laplace_f, normal_interval, predictive_bounds, predictive_moments, CentrePredictive,
    LaplacePosterior, Predictive, PredictiveMoments, RPosterior, ThetaPosterior,
};
pub use paths::{simulate_predictive_paths, PathEnsemble};

pub(crate) use forecast::forecast;
