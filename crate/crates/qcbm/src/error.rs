use std::path::Path;

/// Process exit status of the CLI.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_TRAINING: i32 = 2;
pub const EXIT_REGRESSION: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad config, unreadable input, or malformed files.
    #[error("{0}")]
    Validation(String),
    /// A training or evaluation step failed after a valid launch.
    #[error("training aborted: {0}")]
    Training(#[from] qcbm_core::Error),
    /// Two reports differ structurally and cannot be compared.
    #[error("reports are not comparable: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Validation(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Mismatch(_) => EXIT_VALIDATION,
            CliError::Training(_) => EXIT_TRAINING,
        }
    }
}
