use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: `{key}` {constraint}")]
    Config { key: String, constraint: String },

    #[error("no detectable coincidence peak (max {max} counts over baseline {baseline:.3})")]
    NoPeak { max: u64, baseline: f64 },

    #[error("peak fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("trace coverage gap: {0}")]
    Coverage(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            constraint: constraint.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
