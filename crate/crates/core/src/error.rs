use thiserror::Error;

/// Errors produced by the recruitment engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A function was called outside its mathematical domain.
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    /// A configuration value is invalid; `field` names the offending key.
    #[error("invalid configuration `{field}`: {detail}")]
    Config { field: String, detail: String },

    /// An operation precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The interim data carry too little information for an estimator.
    #[error("insufficient data for {block}: {detail}")]
    InsufficientData { block: &'static str, detail: String },

    /// The optimiser could not produce a finite maximiser.
    #[error("optimizer failure in {block}: {detail}")]
    Optimizer { block: &'static str, detail: String },

    /// Imported data do not match the requested model.
    #[error("data/model mismatch: {0}")]
    DataMismatch(String),

    /// The forecast horizon is too short for the requested target.
    #[error("forecast horizon too short: {0}")]
    Horizon(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            func,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            detail: detail.into(),
        }
    }

    /// Prefixes the failing block name onto estimation errors.
    pub(crate) fn in_block(self, block: &'static str) -> Self {
        match self {
            Error::Optimizer { detail, .. } => Error::Optimizer { block, detail },
            Error::InsufficientData { detail, .. } => Error::InsufficientData { block, detail },
            other => other,
        }
    }
}
