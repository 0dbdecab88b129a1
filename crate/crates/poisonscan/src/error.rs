use std::path::PathBuf;

use thiserror::Error;

/// A malformed line or record in an input file.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Schema { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: block {block} log {log_index} does not follow block {prev_block} log {prev_log_index}")]
    Order {
        path: PathBuf,
        line: usize,
        prev_block: u64,
        prev_log_index: u32,
        block: u64,
        log_index: u32,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl FormatError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn schema(path: &std::path::Path, line: usize, message: impl ToString) -> Self {
        FormatError::Schema {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        }
    }

    pub(crate) fn invalid(path: &std::path::Path, message: impl ToString) -> Self {
        FormatError::Invalid {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RpcError {
    #[error("blocks {lo}..={hi}: {message} after {attempts} attempts")]
    Fetch { lo: u64, hi: u64, attempts: u32, message: String },
    #[error("log {tx_hash}:{log_index}: {message}")]
    Decode { tx_hash: String, log_index: String, message: String },
    #[error("invalid range {lo}..={hi}")]
    Range { lo: u64, hi: u64 },
    #[error("blocks {lo}..={hi}: {source}")]
    Order {
        lo: u64,
        hi: u64,
        #[source]
        source: poison_core::error::OrderError,
    },
}

/// Error of a command, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or input files: exit code 1.
    #[error("{0}")]
    Input(String),
    /// A check on our own output failed: exit code 2.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }

    pub fn input(e: impl ToString) -> Self {
        CliError::Input(e.to_string())
    }

    pub fn internal(e: impl ToString) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<RpcError> for CliError {
    fn from(e: RpcError) -> Self {
        CliError::Input(e.to_string())
    }
}
