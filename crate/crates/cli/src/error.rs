use std::fmt::Display;

/// Process exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The inputs or arguments are wrong.
    #[error("{0}")]
    Validation(String),
    /// Something failed while processing valid inputs.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn invalid(msg: impl Display) -> Self {
        CliError::Validation(msg.to_string())
    }

    pub fn runtime(msg: impl Display) -> Self {
        CliError::Runtime(msg.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<vasq_core::Error> for CliError {
    fn from(e: vasq_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
