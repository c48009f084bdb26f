use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the metric engine can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("indefinite covariance: smallest eigenvalue {min_eigenvalue:e} is below the floor {floor:e}")]
    IndefiniteCovariance { min_eigenvalue: f64, floor: f64 },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("incomplete ladder {ladder}: entry {model_id} has no value for {metric}")]
    IncompleteLadder {
        ladder: String,
        model_id: String,
        metric: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt file: {0}")]
    Corruption(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the environment or by malformed files
    /// rather than by invalid requests.
    pub fn is_io_or_format(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Format(_) | Error::Corruption(_) | Error::Parse { .. }
        )
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        match err.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Format(format!("{other:?}")),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Format(err.to_string())
    }
}
