use thiserror::Error;

/// Errors raised by the simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A query fell outside the sampled space-time window.
    #[error("window violation: site {site} at time {time} outside sites [{x_min}, {x_max}] x [0, {horizon})")]
    WindowViolation {
        site: i64,
        time: f64,
        x_min: i64,
        x_max: i64,
        horizon: f64,
    },
    /// A model, walk or analysis parameter violates its invariants.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    /// The model itself is inconsistent (reducible chain, failed symmetry declaration, ...).
    #[error("model error: {0}")]
    Model(String),
    /// Malformed line-oriented text input.
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
