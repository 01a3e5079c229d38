use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rotation angle is pi; logarithm branch is ambiguous")]
    BranchAmbiguity,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("kron reduction failed: {0}")]
    Reduction(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("submap {submap} of robot {robot} was already ingested")]
    DuplicateSubmap { robot: u32, submap: u32 },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
