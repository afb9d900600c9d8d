use std::path::Path;

/// Failures mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, unreadable config or input. Exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Unusable data or missing/stale upstream artifacts. Exit code 2.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<terpscape::Error> for CliError {
    fn from(e: terpscape::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
