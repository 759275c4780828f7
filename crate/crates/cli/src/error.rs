use attractor_lab::LabError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure in stage `{stage}`: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: LabError,
    },
    #[error("check failed in stage `{stage}`: {detail}")]
    CheckFailed { stage: &'static str, detail: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } | CliError::CheckFailed { .. } => 3,
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}

/// Tag a core error with the stage it came from.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> Stage<T> for Result<T, LabError> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Numerical { stage, source })
    }
}
