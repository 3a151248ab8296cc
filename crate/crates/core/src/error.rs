use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = RuleError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{file}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Data {
        file: String,
        line: Option<usize>,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("reasoner error: {0}")]
    Reasoner(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RuleError {
    pub(crate) fn data(file: impl Into<String>, line: Option<usize>, message: impl Into<String>) -> Self {
        RuleError::Data {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RuleError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used by the CLI error payload.
    pub fn kind(&self) -> &'static str {
        match self {
            RuleError::Config(_) => "config",
            RuleError::InvalidArgument(_) => "invalid_argument",
            RuleError::Data { .. } => "data",
            RuleError::DimMismatch(_) => "dim_mismatch",
            RuleError::NonFinite(_) => "non_finite",
            RuleError::Reasoner(_) => "reasoner",
            RuleError::Io { .. } => "io",
        }
    }
}
