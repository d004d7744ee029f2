use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("resolution {height}x{width} is not divisible by {divisor}")]
    BadResolution { width: usize, height: usize, divisor: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {index} is {got:?}, expected {expected:?}")]
    ResolutionMismatch {
        index: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("loss became non-finite at step {step} of initialization {init}")]
    Divergence { init: usize, step: usize },
    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: i64 },
    #[error("{path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] pndr_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
