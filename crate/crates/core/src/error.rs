use thiserror::Error;

/// Errors raised by the library. The CLI maps each variant onto a process
/// exit code via [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Too many explorations hit the site cap; the estimate would be biased.
    #[error("censoring rate {rate:.3e} exceeds the refusal threshold {threshold:.0e}")]
    Censored { rate: f64, threshold: f64 },

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }

    /// 0 success, 1 verification failure, 2 usage error, 3 resource/capacity error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Parse { .. } => 2,
            Error::Capacity(_) | Error::Censored { .. } | Error::Io(_) => 3,
            Error::Undefined(_) => 2,
            Error::Internal(_) | Error::Csv(_) | Error::Json(_) => 3,
        }
    }
}
