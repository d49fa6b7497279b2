use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] qtwtt_core::Error),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad magic {found:?}, expected \"QTTS\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: unsupported format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u16 },

    #[error("{path}: record {index} is out of time order")]
    Unsorted { path: PathBuf, index: u64 },

    #[error("{path}: truncated after {complete} of {expected} records")]
    Truncated { path: PathBuf, complete: u64, expected: u64 },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// Short stable identifier used in the machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => match e {
                qtwtt_core::Error::Argument(_) => "argument",
                qtwtt_core::Error::Config { .. } => "config",
                qtwtt_core::Error::NoPeak { .. } => "no_peak",
                qtwtt_core::Error::NonConvergence { .. } => "non_convergence",
                qtwtt_core::Error::Coverage(_) => "coverage",
            },
            CliError::Scenario(_) => "scenario",
            CliError::Io { .. } => "io",
            CliError::BadMagic { .. } => "bad_magic",
            CliError::UnsupportedVersion { .. } => "unsupported_version",
            CliError::Unsorted { .. } => "unsorted",
            CliError::Truncated { .. } => "truncated",
            CliError::Format { .. } => "format",
            CliError::Usage(_) => "usage",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
