//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {what}: {why}")]
    InvalidParameter { what: &'static str, why: String },

    #[error("helix cloud generation exceeded the redraw cap ({attempts} attempts for {wanted} points); geometry is degenerate for these parameters")]
    DegenerateGeometry { attempts: usize, wanted: usize },

    #[error("nearest-neighbor distance is undefined: no frame has at least 2 emitters")]
    NnUndefined,

    #[error("CSR reference curve is not monotone at density {density}: increase mc_frames_per_entry")]
    CurveNotMonotone { density: f64 },

    #[error("RMSE is undefined over an empty pair set")]
    EmptyMatchSet,

    #[error("sub-pixel bias needs at least {min} predictions, got {got}")]
    TooFewPredictions { min: usize, got: usize },

    #[error("fit window is degenerate (all-zero photon counts)")]
    DegenerateWindow,

    #[error("frame kind mismatch: {0}")]
    FrameKind(&'static str),

    #[error("{path}:{line}: {msg}")]
    CsvParse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("manifest checksum mismatch for {path}: manifest {expected}, file {actual}")]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("frame file {path} holds {actual} bytes, manifest implies {expected}")]
    FrameFileSize {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("failed to {action} {path}: {source}")]
    Io {
        action: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("density calibration did not converge for target {target}")]
    CalibrationFailed { target: f64 },
}

impl Error {
    pub(crate) fn io(action: &'static str, path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            action,
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::InvalidParameter {
            what,
            why: why.into(),
        }
    }
}
