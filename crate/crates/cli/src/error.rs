//! CLI-level error type with process exit codes:
//! 2 configuration, 3 data, 4 numerical failure.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Configuration file problem, with the offending line and key.
    Config {
        line: usize,
        key: String,
        reason: String,
    },
    /// Dataset schema violation, with file and row.
    Schema {
        file: String,
        row: usize,
        reason: String,
    },
    Io(std::io::Error),
    /// Estimation failure bubbled up from the core library.
    Numerical(irts_core::Error),
}

impl CliError {
    pub fn config(line: usize, key: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config {
            line,
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn schema(file: impl Into<String>, row: usize, reason: impl Into<String>) -> Self {
        CliError::Schema {
            file: file.into(),
            row,
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Schema { .. } | CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { line, key, reason } => {
                write!(f, "config error (line {line}, key `{key}`): {reason}")
            }
            CliError::Schema { file, row, reason } => {
                write!(f, "data error ({file}, row {row}): {reason}")
            }
            CliError::Io(e) => write!(f, "io error: {e}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<irts_core::Error> for CliError {
    fn from(e: irts_core::Error) -> Self {
        CliError::Numerical(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
