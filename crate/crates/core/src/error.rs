use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error on `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("parse error{}: {message}", location.as_ref().map(|l| format!(" at {l}")).unwrap_or_default())]
    Parse { location: Option<String>, message: String },

    #[error("unknown dataset `{name}` (available: {available})")]
    UnknownDataset { name: String, available: String },

    #[error("optimization failed after {starts} starts; best log-likelihood {best_loglik}")]
    Optimization {
        starts: usize,
        best_point: [f64; 3],
        best_loglik: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Validation {
        field: field.into(),
        message: message.into(),
    }
}
