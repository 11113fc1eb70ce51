use weylab::LabError;

/// Failures of a CLI run, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or invalid configuration, or an unusable output directory.
    #[error("config error: {0}")]
    Config(String),

    /// A numerical operation failed.
    #[error("numerical error: {0}")]
    Numerical(#[from] LabError),

    /// `--check` found outputs that differ from the manifest.
    #[error("reproducibility check failed: {0}")]
    Check(String),
}

impl CliError {
    pub fn field(name: &str, reason: impl std::fmt::Display) -> Self {
        CliError::Config(format!("field `{name}`: {reason}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Check(_) => 3,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
