use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the codec, link and harness can report.
///
/// Variants carrying an `offset` refer to a byte position inside a payload;
/// variants carrying a `line` refer to a 1-based line in a text document.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error at line {line}: {msg}")]
    Schema { line: usize, msg: String },

    #[error("object {object} projects at or beyond the horizon (w = {w:e})")]
    Horizon { object: usize, w: f64 },

    #[error("invalid homography: {0}")]
    Homography(String),

    #[error("invalid detection: {0}")]
    Detection(String),

    #[error("ontology mismatch: {0}")]
    OntologyMismatch(String),

    #[error("ontology mismatch at byte {offset}: {msg}")]
    WireOntologyMismatch { offset: usize, msg: String },

    #[error("decode error in matrix {matrix}: {msg}")]
    Decode { matrix: usize, msg: String },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },

    #[error("payload truncated at byte {offset}: expected {expected} bytes")]
    Truncation { offset: usize, expected: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("infeasible scenario spec: {0}")]
    Spec(String),

    #[error("invalid link config: {0}")]
    Config(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Byte offset for payload parsing failures.
    pub fn offset(&self) -> Option<usize> {
        match self {
            Error::Format { offset, .. }
            | Error::Truncation { offset, .. }
            | Error::WireOntologyMismatch { offset, .. } => Some(*offset),
            _ => None,
        }
    }

    /// True for failures caused by the input data rather than by misuse of
    /// the API or broken internal invariants.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Config(_))
    }
}
