use std::path::PathBuf;

use cssa::CssaError;
use thiserror::Error;

/// Failure classes reported by the command-line tool.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {message}")]
    DictFormat { path: PathBuf, message: String },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("shape: {0}")]
    Shape(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CssaError),
}

/// Coarse category used for the process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Shape,
    Config,
}

impl CliError {
    pub fn class(&self) -> ErrorClass {
        match self {
            Self::Io { .. } | Self::Image { .. } | Self::DictFormat { .. } | Self::Csv(_) => ErrorClass::Io,
            Self::Shape(_) => ErrorClass::Shape,
            Self::Config(_) => ErrorClass::Config,
            Self::Core(e) => match e {
                CssaError::InvalidParameter(_) => ErrorClass::Config,
                _ => ErrorClass::Shape,
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Config => 2,
            ErrorClass::Io => 3,
            ErrorClass::Shape => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
