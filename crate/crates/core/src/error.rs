//! Crate error type.

use thiserror::Error;

/// Everything that can go wrong while building models or running estimators.
#[derive(Debug, Error)]
pub enum Error {
    /// The positive-rate digraph is not strongly connected, so no unique
    /// stationary distribution exists.
    #[error("rate matrix is not irreducible: the positive-rate digraph is not strongly connected")]
    NotIrreducible,

    /// A linear solve or eigenvalue computation failed (singular factorization,
    /// non-convergent iteration, ...).
    #[error("linear solver failed: {0}")]
    SolverFailure(String),

    /// A single trajectory hit the jump cap before reaching its horizon.
    #[error("trajectory truncated at the jump cap ({cap} jumps) before reaching t = {horizon}")]
    TruncatedPath { cap: usize, horizon: f64 },

    /// More than the tolerated fraction of an ensemble hit the jump cap.
    #[error("{truncated} of {total} paths hit the jump cap (tolerated fraction {tolerated})")]
    TruncatedPathsExceeded {
        truncated: usize,
        total: usize,
        tolerated: f64,
    },

    /// Importance weights collapsed: effective sample size below 1% of the ensemble.
    #[error("importance weights degenerate: effective sample size {ess:.1} < 1% of n = {n}")]
    WeightDegeneracy { ess: f64, n: usize },

    /// The adaptive ODE stepper could not meet its local error target.
    #[error("ODE stepper failed near t = {t}: step size underflow at tolerance {tol:.1e}")]
    StepperFailure { t: f64, tol: f64 },

    /// Two independent evaluations of the same quantity disagree beyond tolerance.
    #[error("cross-check failed ({what}): |difference| = {delta:.3e} exceeds {tol:.1e}")]
    CrossCheckFailure { what: String, delta: f64, tol: f64 },

    /// An exponential-moment sample mean is dominated by its largest samples,
    /// so the Monte-Carlo estimate is unreliable at this tilt strength.
    #[error(
        "heavy-tailed exponential moment at theta = {theta}: top 1% of samples carry {share:.0}% of the mean"
    )]
    HeavyTailWarning { theta: f64, share: f64 },

    /// A rate entry was zero or negative where a positive rate is required.
    #[error("non-positive rate {rate} on edge ({from} -> {to})")]
    NonPositiveRate { from: usize, to: usize, rate: f64 },

    /// The model description is malformed (bad labels, dangling indices, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A caller-supplied parameter violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
