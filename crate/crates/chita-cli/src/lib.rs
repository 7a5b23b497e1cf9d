//! Process-level plumbing for the pruning toolkit: bit-exact file
//! containers, strict run configuration, and the three commands (`gen`,
//! `prune`, `verify`). The numerical work lives in the `chita` library; this
//! crate only moves bytes and maps failures onto process exit codes.

pub mod config;
pub mod io;
pub mod run;

use thiserror::Error;

/// Process exit codes, fixed as part of the CLI contract.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const FORMAT: i32 = 3;
    pub const INFEASIBLE: i32 = 4;
    pub const VERIFY: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad run configuration: unparsable JSON, unknown keys, out-of-range
    /// values, missing config file.
    #[error("config error: {0}")]
    Config(String),

    /// A data file violates its container format. `offset` is the byte
    /// position of the first violation.
    #[error("{path}: format error at byte {offset}: {detail}")]
    Format {
        path: String,
        offset: u64,
        detail: String,
    },

    /// The requested run cannot be executed on the given input (zero
    /// coordinate budget, more samples requested than exist, singular
    /// restricted systems, ...).
    #[error("infeasible run: {0}")]
    Infeasible(String),

    /// I/O failure on a data file.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit_code::CONFIG,
            CliError::Format { .. } | CliError::Io { .. } => exit_code::FORMAT,
            CliError::Infeasible(_) => exit_code::INFEASIBLE,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Library errors surface either as configuration mistakes (bad parameter
/// ranges) or as infeasible runs (budget/data problems); nothing in the
/// library signals a file-format violation.
impl From<chita::ChitaError> for CliError {
    fn from(e: chita::ChitaError) -> Self {
        use chita::ChitaError::*;
        match e {
            InvalidParameter { .. } => CliError::Config(e.to_string()),
            _ => CliError::Infeasible(e.to_string()),
        }
    }
}
