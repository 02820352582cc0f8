//! Pipeline-level errors.

use thiserror::Error;

use crate::embeddings::EmbedError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}:{line}: {msg}")]
    Corpus {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Embed(#[from] EmbedError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training: {0}")]
    Train(String),

    #[error("model bundle {path}: {msg}")]
    Bundle { path: String, msg: String },
}

impl PipelineError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn bundle(path: &std::path::Path, msg: impl Into<String>) -> Self {
        PipelineError::Bundle {
            path: path.display().to_string(),
            msg: msg.into(),
        }
    }
}
