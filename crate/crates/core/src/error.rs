use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face on line {line} is not a triangle")]
    NonTriangularFace { line: usize },
    #[error("could not place object {object} after {attempts} attempts")]
    PlacementFailure { object: usize, attempts: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("no material sample for instance {0}")]
    MissingMaterial(i32),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("image too small: {0}")]
    TooSmallImage(String),
    #[error("validity mask is empty")]
    EmptyMask,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{path}: bad magic")]
    BadMagic { path: PathBuf },
    #[error("{path}: truncated payload (expected {expected} bytes, found {found})")]
    Truncated { path: PathBuf, expected: usize, found: usize },
    #[error("{path}: unsupported {what}")]
    Unsupported { path: PathBuf, what: String },
    #[error("manifest references missing files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFiles(Vec<PathBuf>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("png encoding failed: {0}")]
    Png(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
