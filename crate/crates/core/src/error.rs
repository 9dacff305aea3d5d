use thiserror::Error;

/// Errors raised by the certification toolkit.
///
/// Contract violations on plain inputs (mismatched dimensions, non-positive
/// step sizes) panic instead; these variants are the recoverable outcomes
/// that callers are expected to report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("signature error: expected ({expected_plus}, {expected_minus}, 0), found ({plus}, {minus}, {zero})")]
    Signature {
        expected_plus: usize,
        expected_minus: usize,
        plus: usize,
        minus: usize,
        zero: usize,
    },

    #[error("chart error: {0}")]
    Chart(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("degenerate constraint set: {0}")]
    DegenerateConstraintSet(String),

    #[error("nondegeneracy violation: m0 = {m0:e} is not above {tol:e}")]
    NondegeneracyViolation { m0: f64, tol: f64 },

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("test function support error: {0}")]
    Support(String),

    #[error("resolution error: eps = {eps:e} is below 4h = {min:e}")]
    Resolution { eps: f64, min: f64 },

    #[error("range error: {0}")]
    Range(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
