use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid step law: {0}")]
    InvalidLaw(String),

    #[error("invalid cone: {0}")]
    InvalidCone(String),

    #[error("collinear support: non-collinearity assumption violated (c = {witness:?} annihilates the centered support)")]
    Collinear { witness: Vec<f64> },

    #[error("zero drift: the walk is driftless, only the nonzero-drift regime is supported")]
    ZeroDrift,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("window too small: edge mass ratio {edge_ratio:e} exceeds threshold; try window >= {suggested}")]
    WindowTooSmall { edge_ratio: f64, suggested: i64 },

    #[error("tail bound beyond the window is {tail:e}, above the allowed {allowed:e}; try window >= {suggested}")]
    TailBound {
        tail: f64,
        allowed: f64,
        suggested: i64,
    },

    #[error("query outside retained horizon: {0}")]
    Horizon(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LabError {
    /// True for errors caused by a bad model or configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            LabError::Config(_)
                | LabError::Dimension { .. }
                | LabError::InvalidLaw(_)
                | LabError::InvalidCone(_)
                | LabError::Collinear { .. }
                | LabError::ZeroDrift
        )
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
