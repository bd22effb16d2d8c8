//! Error types shared across the solver stack.

use nalgebra::DVector;

/// Errors raised by problem construction, model building and the solver drivers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input data (carries the 1-based line number).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// The input stream contained no samples.
    #[error("empty dataset")]
    EmptyDataset,

    /// A scalar argument violated its domain (negative lambda, non-positive tau, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A model variant was requested that the oracle cannot support.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// The h-search for the finite-difference Hessian did not couple to the step.
    /// Carries the last trial pair so the caller can decide whether the run converged.
    #[error("step-size coupling failed after {iters} trials (h = {h:.3e}, |s| = {step_norm:.3e})")]
    CouplingFailure {
        iters: usize,
        h: f64,
        step_norm: f64,
        last_step: DVector<f64>,
    },

    /// The tau escalation loop hit its safety cap; an upstream invariant is broken.
    #[error("tau escalation exceeded cap {cap} (tau = {tau:.3e})")]
    EscalationFailure { cap: usize, tau: f64 },

    /// A subproblem solver could not meet its inexactness criterion.
    #[error("subproblem solve failed: {0}")]
    SubsolveFailure(String),

    /// A NaN or infinity surfaced where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
