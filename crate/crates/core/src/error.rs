//! Crate-wide error type.
//!
//! Every variant carries a stable kebab-case code (the `thiserror` prefix)
//! so that callers — in particular the CLI — can map failures onto exit
//! codes and emit one-line machine-parsable diagnostics.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Parameter vector violates the estimator family's constraints.
    #[error("invalid-params: {0}")]
    InvalidParams(String),

    /// A numeric routine failed to converge.
    #[error("numeric-failure: {0}")]
    NumericFailure(String),

    /// The requested metric level lies at or beyond the curve's asymptote.
    /// `max_improvement_pct` is populated when the request was phrased as a
    /// relative improvement, and reports the largest feasible percentage.
    #[error("unreachable-target: {detail}")]
    UnreachableTarget {
        detail: String,
        max_improvement_pct: Option<f64>,
    },

    /// The requested metric level lies at or beyond the curve's value as the
    /// dataset size shrinks to zero.
    #[error("degenerate-target: {0}")]
    DegenerateTarget(String),

    /// A reference curve's value cannot be reached by the other curve.
    #[error("no-equivalence: {0}")]
    NoEquivalence(String),

    #[error("insufficient-data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("insufficient-heldout: {0}")]
    InsufficientHeldout(String),

    /// Every local optimization diverged; reported, never silently swallowed.
    #[error("fit-failure: {0}")]
    FitFailure(String),

    #[error("shape-error: {0}")]
    ShapeError(String),

    #[error("empty-input: {0}")]
    EmptyInput(String),

    #[error("duplicate-input: {0}")]
    DuplicateInput(String),

    #[error("unknown-lanelet: {0}")]
    UnknownLanelet(String),

    #[error("degenerate-input: {0}")]
    DegenerateInput(String),

    #[error("invalid-exponent: {0}")]
    InvalidExponent(String),

    #[error("out-of-range: {0}")]
    OutOfRange(String),

    #[error("invalid-label: {0}")]
    InvalidLabel(String),

    #[error("invalid-input: {0}")]
    InvalidInput(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of numeric routines (as opposed to bad input data).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NumericFailure(_) | Error::FitFailure(_))
    }
}
