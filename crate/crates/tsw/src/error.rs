//! Crate-wide error type and the CLI exit-code policy.
//!
//! Exit codes: 1 for user errors (bad flags, violated preconditions),
//! 2 for data errors (missing or corrupt files), 3 for internal invariant
//! violations.

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // Data errors (exit 2).
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: bad magic, not a {expected} file")]
    Magic {
        path: PathBuf,
        expected: &'static str,
    },

    #[error("{path}: truncated while reading {what}")]
    Truncated { path: PathBuf, what: String },

    #[error("{path}: {extra} trailing bytes after the last field")]
    TrailingData { path: PathBuf, extra: u64 },

    #[error("{path}: duplicate tensor name {name:?}")]
    DuplicateName { path: PathBuf, name: String },

    #[error(
        "{path}: tensor {name:?}: stored active count {stored} but mask popcount is {counted}"
    )]
    Popcount {
        path: PathBuf,
        name: String,
        stored: u64,
        counted: u64,
    },

    #[error("{path}: {what}")]
    Corrupt { path: PathBuf, what: String },

    // User errors (exit 1).
    #[error("alpha must be in [0, 1), got {alpha}")]
    InvalidAlpha { alpha: f32 },

    #[error("{context}: structure mismatch (fingerprint {expected} vs {actual})")]
    FingerprintMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("dimension mismatch: {what}")]
    DimMismatch { what: String },

    #[error("{what} is empty")]
    EmptyInput { what: &'static str },

    #[error("weights must be nonnegative and sum to 1 (off by {deviation:.2e})")]
    OffSimplex { deviation: f64 },

    #[error("expected {expected} weights, got {actual}")]
    WeightCount { expected: usize, actual: usize },

    #[error("neighbor count {c} invalid for an index with {rows} rows")]
    NeighborCount { c: usize, rows: usize },

    #[error("training diverged: {what}")]
    Divergence { what: String },

    #[error("invalid configuration: {what}")]
    Config { what: String },

    #[error("{what}")]
    Usage { what: String },

    // Internal errors (exit 3).
    #[error("internal invariant violated: {what}")]
    Internal { what: String },
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn usage(what: impl Into<String>) -> Self {
        Error::Usage { what: what.into() }
    }

    pub fn internal(what: impl Into<String>) -> Self {
        Error::Internal { what: what.into() }
    }

    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Io { .. }
            | Magic { .. }
            | Truncated { .. }
            | TrailingData { .. }
            | DuplicateName { .. }
            | Popcount { .. }
            | Corrupt { .. } => 2,
            Internal { .. } => 3,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_policy() {
        let data = Error::Magic {
            path: PathBuf::from("x.ntc"),
            expected: "NTC",
        };
        assert_eq!(data.exit_code(), 2);
        assert_eq!(Error::InvalidAlpha { alpha: 1.5 }.exit_code(), 1);
        assert_eq!(Error::internal("boom").exit_code(), 3);
        assert_eq!(
            Error::io(Path::new("gone"), io::Error::from(io::ErrorKind::NotFound)).exit_code(),
            2
        );
    }
}
