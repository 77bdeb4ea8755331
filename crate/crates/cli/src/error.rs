use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{stage} requires artifact {artifact} (run `{producer}` first)")]
    MissingArtifact {
        stage: &'static str,
        artifact: String,
        producer: &'static str,
    },
    #[error(transparent)]
    Core(#[from] genderpair::Error),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::MissingArtifact { .. } => 2,
            CliError::Core(_) | CliError::Internal(_) => 3,
        }
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Internal(format!("{}: {e}", path.display()))
}
