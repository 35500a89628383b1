use std::path::PathBuf;

/// Errors raised anywhere in the workbench.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// A non-finite value appeared while evaluating a model or its gradient.
    #[error("non-finite value at parameter index {index}: {context}")]
    NonFinite { index: usize, context: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("batch statistics undefined: {0}")]
    Statistics(String),

    #[error("stale forward cache (cache built at model version {cache}, model is at {model})")]
    StaleCache { cache: u64, model: u64 },

    #[error("fingerprint mismatch: expected {expected}, found {found}")]
    Fingerprint { expected: String, found: String },

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("missing checkpoint {0}")]
    MissingCheckpoint(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input or configuration, as opposed
    /// to numerical breakdown.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Validation(_)
                | Error::Fingerprint { .. }
                | Error::Corrupt { .. }
                | Error::MissingCheckpoint(_)
                | Error::Json(_)
        )
    }

    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::Numeric(_) | Error::Statistics(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
