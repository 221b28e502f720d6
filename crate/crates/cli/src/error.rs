use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration; `path` names the offending key.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv {}: {message}", path.display())]
    Csv { path: PathBuf, message: String },

    #[error(transparent)]
    Simulation(#[from] byzbandit_core::Error),

    #[error("verification failed: {0}")]
    Verify(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 1 verification failure, 2 config error, 3 I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::Csv { .. } => 2,
            Self::Io { .. } => 3,
            Self::Verify(_) => 1,
            Self::Simulation(e) => match e {
                byzbandit_core::Error::Invariant { .. } => 1,
                _ => 2,
            },
        }
    }
}
