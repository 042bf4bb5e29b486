use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot parse {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for this error category.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Parse { .. } | Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Io { .. } => 4,
        }
    }
}

impl From<fraclab_core::Error> for HarnessError {
    fn from(e: fraclab_core::Error) -> Self {
        match e {
            fraclab_core::Error::InvalidArgument(m) => Self::Config(vec![m]),
            fraclab_core::Error::Numerical(m) => Self::Numerical(m),
            other => Self::Numerical(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
