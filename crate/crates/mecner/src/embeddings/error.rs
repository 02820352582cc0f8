//! Errors raised while building vocabularies and aligning corpora.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: expected header \"<count> <dim>\", got {got:?}")]
    BadHeader {
        path: String,
        line: usize,
        got: String,
    },

    #[error("{path}: embedding dimension {found} does not match expected {expected}")]
    DimMismatch {
        path: String,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: token {token:?} has {found} values, expected {expected}")]
    RowWidth {
        path: String,
        line: usize,
        token: String,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: duplicate token {token:?}")]
    DuplicateToken {
        path: String,
        line: usize,
        token: String,
    },

    #[error("{path}:{line}: malformed float {value:?}")]
    MalformedFloat {
        path: String,
        line: usize,
        value: String,
    },

    #[error("{path}:{line}: expected \"character<TAB>radical\", got {got:?}")]
    BadRadicalRow {
        path: String,
        line: usize,
        got: String,
    },

    #[error(
        "segmentation does not concatenate to the character sequence; first divergence at character offset {offset}"
    )]
    Misaligned { offset: usize },

    #[error("malformed tag {tag:?}: expected \"O\", \"B-<type>\" or \"I-<type>\"")]
    BadTag { tag: String },
}
