use std::io;

use thiserror::Error;

/// Every failure the library can report, grouped by what went wrong.
#[derive(Debug, Error)]
pub enum CasmError {
    /// Bad configuration: shape mismatches, unknown keys, invalid hyperparameters.
    #[error("configuration error: {0}")]
    Config(String),
    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),
    /// NaN/Inf values or scores outside their valid range.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A procedure contract was violated (e.g. not enough items to sample from).
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CasmError {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            CasmError::Config(_) => 2,
            CasmError::Data(_) => 3,
            CasmError::Numerical(_) => 4,
            CasmError::Protocol(_) => 5,
            CasmError::Io(_) => 6,
        }
    }
}

pub type Result<T, E = CasmError> = std::result::Result<T, E>;
