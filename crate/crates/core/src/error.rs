use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the segmentation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bone not found: no dark component passes the area and shape filters")]
    BoneNotFound,

    #[error("degenerate keypoints: {0}")]
    DegenerateKeypoints(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 1 = usage/configuration, 2 = data (missing or malformed input),
    /// 3 = pipeline failure on otherwise valid data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Io { .. } | Error::Format { .. } | Error::InvalidInput(_) | Error::Json(_) => 2,
            Error::BoneNotFound | Error::DegenerateKeypoints(_) | Error::Training(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
