use std::path::PathBuf;

/// Command failure. Each class has its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("missing artifact {}; run `{stage}` first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("alphabet mismatch in {}: {reason}", path.display())]
    AlphabetMismatch { path: PathBuf, reason: String },
    #[error("{} was produced by a different configuration (hash {found}, expected {expected}); rerun `{stage}`", path.display())]
    StaleArtifact {
        path: PathBuf,
        found: String,
        expected: String,
        stage: &'static str,
    },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 0 success, 1 other failure, 2 configuration, 3 missing artifact,
    /// 4 alphabet mismatch, 5 stale artifact.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config { .. } => 2,
            CliError::MissingArtifact { .. } => 3,
            CliError::AlphabetMismatch { .. } => 4,
            CliError::StaleArtifact { .. } => 5,
        }
    }

    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        CliError::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn failed(e: impl std::fmt::Display) -> Self {
        CliError::Failed(e.to_string())
    }
}
