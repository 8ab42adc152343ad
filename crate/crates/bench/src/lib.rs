//! Benchmark harness and command line for `tsmm`.
//!
//! [`run_bench`] compares three ways of running the same multiplication
//! repeatedly: packing once up front, packing inside every call, and the
//! naive triple loop. Records are written as CSV with the columns in
//! [`CSV_HEADER`].

mod bench;
pub mod cli;
mod commands;

use std::path::PathBuf;

pub use bench::{run_bench, seeded_matrix, write_csv, BenchRecord, BenchSpec, Mode, PlanSource, CSV_HEADER};
pub use commands::{kernel_report, run_model, run_tune, ModelSpec, TuneReport, TuneSpec};

/// Exit status for runs whose result disagreed with the reference.
pub const EXIT_ORACLE: i32 = 1;
/// Exit status for invalid flags, profiles or problem sizes.
pub const EXIT_BAD_INPUT: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid benchmark spec: {0}")]
    Spec(String),
    #[error("result differs from the reference: {0}")]
    OracleMismatch(String),
    #[error(transparent)]
    Tsmm(#[from] tsmm::TsmmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::OracleMismatch(_) => EXIT_ORACLE,
            _ => EXIT_BAD_INPUT,
        }
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

/// Where kernel and plan caches live: `$TSMM_CACHE_DIR`, else
/// `$XDG_CACHE_HOME/tsmm`, else `~/.cache/tsmm`, else `.tsmm-cache`.
pub fn default_cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os("TSMM_CACHE_DIR") {
        return dir.into();
    }
    if let Some(dir) = std::env::var_os("XDG_CACHE_HOME") {
        return PathBuf::from(dir).join("tsmm");
    }
    if let Some(home) = std::env::var_os("HOME") {
        return PathBuf::from(home).join(".cache").join("tsmm");
    }
    PathBuf::from(".tsmm-cache")
}
