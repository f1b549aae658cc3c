use thiserror::Error;

use crate::orientation::EulerAngles;

pub type Result<T, E = FitError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum FitError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The quadratic part of the quadric is singular.
    #[error("degenerate quadric: quadratic part is singular")]
    DegenerateQuadric,

    #[error("quadric is not a real ellipsoid")]
    NotAnEllipsoid,

    /// No generalized eigenvector satisfies `v^T C(k) v > 0` for this `k`.
    #[error("no admissible solution for k = {k}")]
    ConstraintInfeasible { k: f64 },

    #[error("fit failed after {iterations} outer iterations: {reason}")]
    FitFailed { iterations: usize, reason: String },

    #[error("no axis relabeling reproduces the projected points")]
    OrientationAmbiguous { candidates: Vec<EulerAngles> },
}

impl FitError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FitError::InvalidInput(msg.into())
    }
}
