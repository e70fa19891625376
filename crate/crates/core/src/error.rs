use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, QmsError>;

#[derive(Debug, Error)]
pub enum QmsError {
    /// Operand dimensions disagree.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: usize,
        actual: usize,
    },

    /// Invalid hyperparameter or configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// Model document could not be decoded.
    #[error("model parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// A non-finite value escaped the loss or gradient computation.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl QmsError {
    pub(crate) fn shape(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        QmsError::Shape {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        QmsError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        QmsError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the command-line tool: 1 configuration,
    /// 2 data (including shape and parse problems), 3 numerical abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            QmsError::Config(_) => 1,
            QmsError::Shape { .. }
            | QmsError::Data(_)
            | QmsError::Parse { .. }
            | QmsError::Io { .. } => 2,
            QmsError::Numerical(_) => 3,
        }
    }
}
