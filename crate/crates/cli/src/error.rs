use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] wavefluct::error::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    /// A stage input is missing or was produced under another config.
    #[error("{0}")]
    Stage(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// 2 config, 3 solver failure, 4 verification failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => e.exit_code(),
            CliError::Verification(_) => 4,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) if e.exit_code() == 2 => "config",
            CliError::Core(e) if e.exit_code() == 3 => "solver",
            CliError::Core(e) if e.exit_code() == 4 => "verification",
            CliError::Core(_) => "numerics",
            CliError::Io { .. } | CliError::Json(_) | CliError::Csv(_) => "io",
            CliError::Stage(_) => "stage",
            CliError::Verification(_) => "verification",
        }
    }
}

/// Machine-readable error printed on stderr and written to `error.json`.
#[derive(Debug, Serialize)]
pub struct ErrorRecord<'a> {
    pub schema: &'static str,
    pub stage: &'a str,
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
}

impl<'a> ErrorRecord<'a> {
    pub fn new(stage: &'a str, e: &CliError) -> Self {
        ErrorRecord { schema: "wavefluct.error/1", stage, kind: e.kind(), exit_code: e.exit_code(), message: e.to_string() }
    }
}
