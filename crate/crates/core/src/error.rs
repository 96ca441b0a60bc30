use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad or missing configuration, including resource files that do not exist.
    #[error("config error: {0}")]
    Config(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    /// Input data that cannot be used (empty corpora, malformed resource rows).
    #[error("data error: {0}")]
    Data(String),

    /// A parameter outside its documented range.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// A ratio whose denominator is zero for this user.
    #[error("undefined signal: {0}")]
    UndefinedSignal(&'static str),

    #[error("timestamp outside analysis window: {0}")]
    OutOfWindow(i64),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for unusable
    /// data, 4 for internal failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::MissingFile(_) | Error::Param(_) => 2,
            Error::Data(_) | Error::Io { .. } | Error::Json(_) => 3,
            Error::UndefinedSignal(_) | Error::OutOfWindow(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
