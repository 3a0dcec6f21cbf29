use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A document violates a graph invariant.
    #[error("document `{doc_id}`: {message}")]
    Validation { doc_id: String, message: String },

    /// Input bytes could not be decoded. `location` is a field path or a
    /// line/column position.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A tree does not fit the graph or violates a coding-tree invariant.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("input too large: {0}")]
    Size(String),

    #[error("{stage}: missing artifact {}", path.display())]
    MissingArtifact { stage: &'static str, path: PathBuf },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(doc_id: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            doc_id: doc_id.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Parse {
            location: format!("line {} column {}", err.line(), err.column()),
            message: err.to_string(),
        }
    }
}
