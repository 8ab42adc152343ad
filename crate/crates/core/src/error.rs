use std::io;
use std::path::PathBuf;

use crate::model::Operand;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum TsmmError {
    #[error("dimension mismatch for {operand}: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    DimensionMismatch {
        operand: Operand,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid matrix view: {0}")]
    InvalidView(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("hardware profile, line {line}: {message}")]
    ProfileParse { line: usize, message: String },

    #[error("invalid hardware profile: {0}")]
    InvalidProfile(String),

    #[error("kernel {m_r}x{n_r} needs {needed} vector registers, only {available} available")]
    ShapeOverBudget {
        m_r: usize,
        n_r: usize,
        needed: usize,
        available: usize,
    },

    #[error("invalid kernel shape: {0}")]
    InvalidShape(String),

    #[error("no kernel in the catalog fits the register budget")]
    NoValidKernel,

    #[error("no blocking satisfies the cache constraints: {0}")]
    InfeasibleBlocking(String),

    #[error("packing geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("corrupt packed header: {0}")]
    CorruptHeader(String),

    #[error("packed buffers do not match the execution plan: {0}")]
    PlanMismatch(String),

    #[error("elapsed time must be positive, got {0} s")]
    NonPositiveTime(f64),

    #[error("invalid trial configuration: {0}")]
    InvalidTrial(String),

    #[error("no candidate plans to evaluate")]
    NoCandidates,

    #[error("every candidate plan failed the correctness check")]
    AllCandidatesRejected,

    #[error("cache file {path}: {message}")]
    CacheFormat { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = TsmmError> = std::result::Result<T, E>;
