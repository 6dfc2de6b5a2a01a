use thiserror::Error;

/// Errors raised by the theory, simulation and PLS layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A model parameter violates its type invariant.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// An argument lies outside the domain of the operation.
    #[error("domain error in {op}: {reason}")]
    Domain { op: &'static str, reason: String },

    /// Input is structurally degenerate (zero polynomial, zero vector, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A root solver produced a result that contradicts a proven root count.
    #[error("root solver failure: {0}")]
    Solver(String),

    /// Two independent computations of the same quantity disagree.
    #[error("numerical consistency check failed: {0}")]
    Consistency(String),

    /// An iterative method stopped before reaching its tolerance.
    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Failure inside a PLS iteration, tagged with the 1-based step index.
    #[error("PLS step {step}: {source}")]
    PlsStep { step: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn domain(op: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain { op, reason: reason.into() }
    }

    /// True for errors that signal a numerical defect rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Solver(_) | Error::Consistency(_) | Error::Convergence(_) => true,
            Error::PlsStep { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
