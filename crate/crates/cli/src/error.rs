use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config invalid: {0}")]
    ConfigInvalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("task `{id}` failed: {source}")]
    Task { id: String, source: hardyheat_core::Error },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("{path}: malformed report: {source}")]
    MalformedReport { path: PathBuf, source: serde_json::Error },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
