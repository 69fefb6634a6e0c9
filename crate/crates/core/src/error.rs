use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = QcmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QcmError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("R = {r} au is outside the usable range [{min}, {max}] au")]
    OutOfRange { r: f64, min: f64, max: f64 },

    #[error("surface supports no bound state below its asymptote")]
    EmptySpectrum,

    #[error("eigensolver failed: {0}")]
    Solver(String),

    #[error("initial-condition geometry: {0}")]
    Geometry(String),

    #[error("vibrational state v = {v} is not bound on this surface")]
    Unbound { v: usize },

    #[error("integrator: {0}")]
    Integrator(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl QcmError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        QcmError::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        QcmError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            QcmError::Solver(_)
                | QcmError::Integrator(_)
                | QcmError::Geometry(_)
                | QcmError::Unbound { .. }
                | QcmError::EmptySpectrum
        )
    }
}
