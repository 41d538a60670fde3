use thiserror::Error;

pub type Result<T> = std::result::Result<T, QcError>;

#[derive(Debug, Error)]
pub enum QcError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("solvability violated: integral {integral:e} exceeds tolerance {tol:e}")]
    Solvability { integral: f64, tol: f64 },

    #[error("degenerate spectrum: eigenvalue of degree {k} vanishes")]
    DegenerateSpectrum { k: usize },

    #[error("field has nonzero Q-average {0:e}")]
    NonzeroQAverage(f64),

    #[error("{what} is not available on the {backend} backend")]
    Unsupported { backend: String, what: String },

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("aliasing: fraction {fraction:.3e} of the right-hand side energy sits in the top modes")]
    Aliasing { fraction: f64 },

    #[error("configuration too close to the fat diagonal: distance {dist:e} < {min:e}")]
    FatDiagonal { dist: f64, min: f64 },

    #[error("gradient identity mismatch {0:e}")]
    GradientInconsistency(f64),

    #[error("orthogonality residual {0:e} above tolerance")]
    Orthogonality(f64),

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("convention error: {0}")]
    Convention(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("malformed config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl QcError {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            QcError::Config(_) => 65,
            QcError::DimensionMismatch { .. }
            | QcError::Invalid(_)
            | QcError::Solvability { .. }
            | QcError::NonzeroQAverage(_)
            | QcError::Unsupported { .. }
            | QcError::FatDiagonal { .. }
            | QcError::Convention(_)
            | QcError::InsufficientData(_) => 2,
            QcError::DegenerateSpectrum { .. }
            | QcError::Resolution(_)
            | QcError::Aliasing { .. }
            | QcError::GradientInconsistency(_)
            | QcError::Orthogonality(_)
            | QcError::Convergence(_)
            | QcError::Overflow(_) => 3,
            QcError::Io(_) | QcError::Csv(_) => 3,
        }
    }
}

impl From<serde_json::Error> for QcError {
    fn from(e: serde_json::Error) -> Self {
        QcError::Config(e.to_string())
    }
}
