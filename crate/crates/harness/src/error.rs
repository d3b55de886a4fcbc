use std::io;
use std::path::PathBuf;

use nlsfg_core::Error as CoreError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Core {
        path: String,
        #[source]
        source: CoreError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("acceptance failed: {0}")]
    Acceptance(String),
}

impl HarnessError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn core(path: impl Into<String>, source: CoreError) -> Self {
        Self::Core {
            path: path.into(),
            source,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefixes the location of config and numerical errors with `path`.
    pub fn within(self, path: &str) -> Self {
        match self {
            Self::Config {
                path: inner,
                message,
            } => Self::Config {
                path: format!("{path} ({inner})"),
                message,
            },
            Self::Core {
                path: inner,
                source,
            } => Self::Core {
                path: format!("{path} ({inner})"),
                source,
            },
            other => other,
        }
    }

    /// Process exit code: 2 for bad input, 3 for numerical failures, 4 for
    /// acceptance failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Core { source, .. } => match source {
                CoreError::InvalidInput(_)
                | CoreError::GenericityViolation { .. }
                | CoreError::DegenerateGap { .. }
                | CoreError::TooManyModes { .. }
                | CoreError::ModeCollision { .. } => 2,
                _ => 3,
            },
            Self::Io { .. } => 1,
            Self::Acceptance(_) => 4,
        }
    }
}
