use std::path::PathBuf;

/// Errors produced by the integrators, diagnostics and experiment harness.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// The modified-frequency equation has no solution for this `(h, ω)`.
    #[error("method {method}: no modified frequency for h = {h}, omega = {omega} ({reason})")]
    Domain {
        method: String,
        h: f64,
        omega: f64,
        reason: &'static str,
    },

    /// A state entry (or its squared norm) overflowed or became NaN.
    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    /// Momentum recovery divides by `sinc(hω̃)`, which is numerically zero here.
    #[error("momentum recovery is ill-conditioned: |sinc(h*omega_tilde)| = {sinc:e}")]
    NearResonance { sinc: f64 },

    /// Newton iteration of the implicit midpoint rule did not reach the tolerance.
    #[error("implicit midpoint solve did not converge in {max_iter} iterations")]
    NoConvergence { max_iter: usize },

    /// The high-accuracy reference integration could not be validated or is too expensive.
    #[error("reference solution not available: {0}")]
    ReferenceNotConverged(String),

    #[error("unknown method {0:?}")]
    UnknownMethod(String),

    #[error("method {0} is not a trigonometric method")]
    NotTrigonometric(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
