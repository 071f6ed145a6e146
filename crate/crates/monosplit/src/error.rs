//! Error type shared across the crate.

use crate::splitting::ConvergenceTrace;

/// Errors produced by vector arithmetic, operator construction, solver
/// runs and the benchmark harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two vectors (or a vector and an operator domain) disagree in dimension.
    #[error("shape mismatch: expected dimension {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    /// A constraint set was described inconsistently (e.g. a box with lo > hi).
    #[error("invalid set: {0}")]
    InvalidSet(String),

    /// An operator was constructed from data that violates its contract.
    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    /// A scalar constant is outside its admissible range.
    #[error("invalid constant: {0}")]
    InvalidConstant(String),

    /// A composite problem is structurally unusable.
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    /// The requested stepsize lies outside the method's admissible range.
    #[error(
        "stepsize {gamma} outside admissible range ]0, {sup}{} (pass the unsafe override to run anyway)",
        if *.inclusive { "]" } else { "[" }
    )]
    StepsizeRejected {
        gamma: f64,
        sup: f64,
        inclusive: bool,
    },

    /// An iterate left the representable range (NaN or infinity). The trace
    /// collected up to the failing iteration is attached for diagnosis.
    #[error("divergence detected at iteration {iter}: iterate is no longer finite")]
    Diverged {
        iter: usize,
        trace: Box<ConvergenceTrace>,
    },

    /// Unknown method name on the command line or in a config file.
    #[error("unknown method '{0}' (expected one of fbs, fbfs, frbs, rfbs, srfb)")]
    UnknownMethod(String),

    /// Unknown problem name.
    #[error("unknown problem '{0}'")]
    UnknownProblem(String),

    /// A config document failed to parse or referenced impossible settings.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
