use std::path::PathBuf;

/// Everything the runner can fail with, split by exit status.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] nsi3d_core::Error),

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("format: {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for anything that fails while
    /// computing or writing results.
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            _ => 3,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
