use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = OdpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum OdpError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed input in {path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error("training diverged: {0}")]
    Diverged(String),
}

impl OdpError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OdpError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        OdpError::Config(msg.into())
    }

    pub fn input(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        OdpError::Input {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the `odp` binary.
    ///
    /// 1 = configuration, 2 = missing or unreadable input, 3 = incompatible
    /// checkpoint, 4 = anything raised while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            OdpError::Config(_) => 1,
            OdpError::Io { .. } | OdpError::Input { .. } => 2,
            OdpError::Incompatible(_) => 3,
            OdpError::InvalidTarget(_) | OdpError::Shape(_) | OdpError::Diverged(_) => 4,
        }
    }
}
