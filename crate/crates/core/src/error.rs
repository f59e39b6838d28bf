use thiserror::Error;

/// Errors raised by source construction, solvers and the checks built on them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("({beta}, {delta}) is outside {set}: {detail}")]
    Domain {
        set: &'static str,
        beta: f64,
        delta: f64,
        detail: String,
    },

    #[error("tent shape violated: {inequality} fails at x = {x} (value {value})")]
    TentViolation {
        inequality: &'static str,
        x: f64,
        value: f64,
    },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("root finding failed for target {target}: {detail}")]
    RootFinding { target: f64, detail: String },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("source spec: {0}")]
    Spec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
