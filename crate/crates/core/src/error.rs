use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A market or run configuration that violates a structural invariant.
    /// The first field names the offending configuration field.
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("invalid mechanism input: {0}")]
    Mechanism(String),

    #[error("pricing scheme violates {0}")]
    NotEnvyFree(String),

    /// The exact solver refuses instances whose allocation space exceeds the budget.
    #[error(
        "exact solver budget exceeded: {size} allocation vectors > cap {cap}; \
         reduce the instance or plug in an approximate ordered-item pricer"
    )]
    SizeBudget { size: u128, cap: u128 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
