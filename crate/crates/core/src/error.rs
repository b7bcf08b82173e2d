use thiserror::Error;

/// Errors raised by the geometry, model and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A Leggett pair law produced a negative probability for outcome `(r_a, r_b)`.
    #[error("constraint violation: P({r_a:+},{r_b:+}) = {value:.3e} is negative (deficit {deficit:.3e})")]
    ConstraintViolation {
        r_a: i8,
        r_b: i8,
        value: f64,
        deficit: f64,
    },

    #[error("degenerate data at {setting}: {reason}")]
    DegenerateData { setting: String, reason: String },

    #[error("no violation possible: {0}")]
    NoViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
