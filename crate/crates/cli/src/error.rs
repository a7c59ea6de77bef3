use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or a missing upstream artifact. Exit code 1.
    #[error("{0}")]
    Validation(String),

    /// Failure while running a stage. Exit code 2.
    #[error(transparent)]
    Runtime(#[from] cervifuse_core::Error),

    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) | CliError::Io(_) => 2,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
