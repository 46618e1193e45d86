use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the design, certification and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("unit eigenvalue: I - A is singular (eigenvalue {eigenvalue} of A is at z = 1)")]
    UnitEigenvalue { eigenvalue: Complex64 },

    #[error("pole evaluation: z = {z} coincides with an eigenvalue of A")]
    PoleEvaluation { z: Complex64 },

    #[error("{name} must be symmetric (max asymmetry {asymmetry:e})")]
    Asymmetric { name: String, asymmetry: f64 },

    #[error("definiteness violated: {0}")]
    Definiteness(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
