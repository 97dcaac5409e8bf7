use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: row {row}, field {field}: {message}", path.display())]
    Row {
        path: PathBuf,
        row: usize,
        field: String,
        message: String,
    },
    #[error("{}: no data rows", path.display())]
    EmptyFile { path: PathBuf },
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("invalid configuration: field {field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("{0}")]
    Input(String),
    #[error("piece '{piece}': {source}")]
    Analysis {
        piece: String,
        #[source]
        source: radif_core::Error,
    },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn row(path: &Path, row: usize, field: &str, message: impl Into<String>) -> Self {
        CliError::Row {
            path: path.to_path_buf(),
            row,
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn analysis(piece: &str, source: impl Into<radif_core::Error>) -> Self {
        CliError::Analysis {
            piece: piece.to_string(),
            source: source.into(),
        }
    }

    /// 1 for bad input, 2 when the analysis itself failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Analysis { .. } | CliError::Failed(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
