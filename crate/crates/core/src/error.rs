use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch on {axis}: expected {expected}, got {actual}")]
    Dimension {
        axis: String,
        expected: usize,
        actual: usize,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("graph state: {0}")]
    State(String),

    #[error("training: {0}")]
    Training(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("format: {0}")]
    Format(String),

    #[error("corrupt checkpoint: {0}")]
    Corruption(String),

    #[error("unknown {kind} {value:?}")]
    Vocabulary { kind: &'static str, value: String },

    #[error("no recordings cover class {0:?}")]
    Coverage(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(axis: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            axis: axis.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
