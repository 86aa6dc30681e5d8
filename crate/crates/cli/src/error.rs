use std::fmt;

/// Failure of a subcommand, split by the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, inputs or configuration (exit 1).
    Validation(String),
    /// Failure while doing the work (exit 2).
    Runtime(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<lacuna::Error> for CliError {
    fn from(e: lacuna::Error) -> Self {
        match e {
            lacuna::Error::InvalidArgument(_) => CliError::Validation(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}
