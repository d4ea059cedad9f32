use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e}, target {tolerance:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("unknown defect id {0}")]
    UnknownDefect(usize),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("dataset {path}: {message}")]
    Dataset { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dataset(path: impl AsRef<std::path::Path>, message: impl Into<String>) -> Self {
        Error::Dataset {
            path: path.as_ref().display().to_string(),
            message: message.into(),
        }
    }

    /// Short machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::DegenerateGeometry(_) => "degenerate-geometry",
            Error::NonConvergence { .. } => "non-convergence",
            Error::UnknownDefect(_) => "unknown-defect",
            Error::Config { .. } => "config",
            Error::Dataset { .. } | Error::Csv(_) | Error::Json(_) => "dataset",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code associated with [`Error::category`].
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParameter { .. } => 2,
            Error::Dataset { .. } | Error::Csv(_) | Error::Json(_) => 3,
            Error::NonConvergence { .. } => 4,
            Error::DegenerateGeometry(_) => 5,
            Error::UnknownDefect(_) => 6,
            Error::Io(_) => 7,
        }
    }
}
