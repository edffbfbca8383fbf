use thiserror::Error;

use crate::engine::ConvergenceTrace;

/// Errors raised by the inference engine and its supporting routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied arguments that violate an operation's preconditions.
    #[error("usage error: {0}")]
    Usage(String),

    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine produced an invalid value (non-PD matrix, non-positive variance, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An inner optimizer (Newton, EM, quasi-Newton) did not reach its tolerance.
    #[error("optimizer did not converge after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    /// CAVI diverged; the trace recorded up to the point of divergence is attached.
    #[error("CAVI diverged after {} iterations", .trace.iterations_run)]
    Diverged { trace: Box<ConvergenceTrace> },

    /// A quantity is not available for this model (e.g. analytic Fisher information for SBM).
    #[error("unavailable: {0}")]
    Unavailable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

pub(crate) fn numeric(msg: impl Into<String>) -> Error {
    Error::Numeric(msg.into())
}
