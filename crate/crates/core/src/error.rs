use thiserror::Error;

/// Errors raised by constructions and certifications.
///
/// Violations found while *verifying* an object are not errors; they are
/// reported inside the certificate or ledger that the verifier returns.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Operands that cannot be combined, e.g. quadratic numbers over different radicands.
    #[error("structural error: {0}")]
    Structural(String),

    /// Division by zero or a singular system.
    #[error("arithmetic error: {0}")]
    Arithmetic(String),

    /// The requested Hadamard order is legal but no generator combination reaches it.
    #[error("order {order} is not constructible from the available generators (tried {attempted:?})")]
    NotConstructible { order: usize, attempted: Vec<usize> },

    /// A size budget or search cap was exceeded.
    #[error("resource limit: {0}")]
    Resource(String),

    /// Post-construction self-check failed. Indicates a bug, never bad input.
    #[error("certification failed: {0}")]
    Certification(String),

    /// Malformed serialized artifact.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn arithmetic(msg: impl Into<String>) -> Self {
        Error::Arithmetic(msg.into())
    }
}
