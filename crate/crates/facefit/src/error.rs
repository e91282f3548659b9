use std::path::{Path, PathBuf};

use facefit_core::Error as CoreError;

/// Everything a command can fail with; [`exit_code`](AppError::exit_code)
/// maps each kind to the process status.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Invalid configuration; `path` is the dotted field path when known.
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    /// File contents that fail structural checks (magic, version,
    /// truncation, checksum).
    #[error("integrity error in {}{}: {message}", file.display(), record.map(|r| format!(" (record {r})")).unwrap_or_default())]
    Integrity {
        file: PathBuf,
        record: Option<usize>,
        message: String,
    },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(CoreError),
    #[error("{0}")]
    Other(String),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config { .. } | AppError::Usage(_) => 2,
            AppError::Integrity { .. } => 3,
            AppError::Numeric(_) => 4,
            AppError::Core(e) => match e {
                CoreError::Config(_) => 2,
                CoreError::Numeric(_) | CoreError::NonFiniteLoss { .. } => 4,
                _ => 1,
            },
            AppError::Io { .. } | AppError::Other(_) => 1,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn integrity(file: &Path, record: Option<usize>, message: impl Into<String>) -> Self {
        AppError::Integrity {
            file: file.to_path_buf(),
            record,
            message: message.into(),
        }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        AppError::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        AppError::Core(e)
    }
}
