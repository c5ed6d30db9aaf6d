//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("validation: {0}")]
    Validation(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("linear algebra: {0}")]
    Linalg(String),

    /// A target mode cannot be reached because the thalamocortical input
    /// vector has no overlap with the corresponding left eigenvector.
    #[error("unreachable mode: |L u| = {magnitude:.3e} at eigenvector {index}")]
    UnreachableMode { index: usize, magnitude: f64 },

    /// A requested eigenvalue collides with one already in the spectrum,
    /// making the placement system singular.
    #[error("singular placement: target eigenvalue {target} within {dist:.3e} of base eigenvalue")]
    SingularPlacement { target: String, dist: f64 },

    #[error("defective base matrix: {0}")]
    Defective(String),

    /// A simulated or trained state left the finite range.
    #[error("divergence at step {step}{}", context.as_ref().map(|c| format!(" ({c})")).unwrap_or_default())]
    Divergence { step: usize, context: Option<String> },

    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    #[error("optimizer failed: {0}")]
    OptimizerFailure(String),

    #[error("undefined test: {0}")]
    UndefinedTest(String),
}

impl CoreError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CoreError::Validation(msg.into())
    }
}
