use thiserror::Error;

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("tolerance check failed: {0}")]
    Tolerance(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Tolerance(_) => 4,
        }
    }

    /// Wraps a core error raised while handling `field`.
    pub fn core(field: &str, e: hypoco_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(format!("{field}: {e}"))
        } else {
            CliError::Config(format!("{field}: {e}"))
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
