use std::path::{Path, PathBuf};

use ankle_core::analysis::AnalysisError;
use ankle_core::trial::TrialError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: u64, msg: String },
    #[error("missing channel '{0}'")]
    MissingChannel(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("simulation failed: {0}")]
    Trial(#[from] TrialError),
    #[error("analysis failed: {0}")]
    Analysis(#[from] AnalysisError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Process exit code: 1 for validation and schema problems, 2 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 2,
            _ => 1,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
