//! Error type for the command-line harness.
//!
//! Core errors pass through unchanged; everything the CLI adds on top
//! (file handling, parsing, config validation, the strict z-gate) gets
//! its own variant so messages can use external 1-based agent indices.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A text-format network file failed to parse. `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A network row does not sum to 1; simulation networks must be
    /// row-stochastic. `row` is the external 1-based agent index.
    #[error("row {row} sums to {sum}; a simulation network must be row-stochastic")]
    RowSumNotOne { row: usize, sum: f64 },

    /// The experiment configuration is self-inconsistent.
    #[error("config: {0}")]
    Config(String),

    /// Verification ran but some |z| exceeded the `--strict` bound.
    #[error("strict mode: max |z| = {max_abs_z} exceeds the bound {bound}")]
    StrictExceeded { max_abs_z: f64, bound: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error(transparent)]
    Core(#[from] opdyn_core::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        CliError::Json {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
