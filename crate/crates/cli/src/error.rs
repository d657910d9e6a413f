use thiserror::Error;

/// Failures of a command run. Configuration problems map to exit code 2,
/// everything raised while running an experiment to exit code 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] lowrank_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialisation error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Re-tag a library error raised while building an experiment from its
/// configuration: the inputs were invalid, not the experiment.
pub fn config_err(e: lowrank_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

pub type CliResult<T> = std::result::Result<T, CliError>;
