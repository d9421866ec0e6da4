//! Command failures and their exit codes.

use std::fmt;

use spatial3d_core::Error as CoreError;

/// Exit 1: bad input, failed check. Exit 2: internal or IO failure.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Internal(String),
}

impl CliError {
    pub fn validation(msg: impl fmt::Display) -> Self {
        CliError::Validation(msg.to_string())
    }

    pub fn internal(msg: impl fmt::Display) -> Self {
        CliError::Internal(msg.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Numeric { .. } => CliError::Internal(e.to_string()),
            CoreError::InvalidArgument(_) | CoreError::Parse { .. } => {
                CliError::Validation(e.to_string())
            }
        }
    }
}
