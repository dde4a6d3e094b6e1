use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad command line or unknown key.
    #[error("usage: {0}")]
    Usage(String),

    #[error("I/O: {0}")]
    Io(String),

    /// Values that parse but do not fit together; names the offending key.
    #[error("config: {field}: {msg}")]
    Config { field: String, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Config { .. } => 4,
        }
    }

    pub fn config(field: &str, err: impl std::fmt::Display) -> Self {
        CliError::Config {
            field: field.to_string(),
            msg: err.to_string(),
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

pub type CliResult<T> = Result<T, CliError>;
