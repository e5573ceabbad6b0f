use std::fmt;

use recruit_core::Error;

pub const OK: i32 = 0;
pub const CONFIG: i32 = 2;
pub const DATA: i32 = 3;
pub const NUMERIC: i32 = 4;

/// A failure carrying its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: CONFIG,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: DATA,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config { .. } | Error::Precondition(_) | Error::Horizon(_) | Error::Io(_) => CONFIG,
            Error::InsufficientData { .. } | Error::DataMismatch(_) | Error::Csv(_) | Error::Json(_) => DATA,
            Error::Domain { .. } | Error::Optimizer { .. } => NUMERIC,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::config(e.to_string())
    }
}
