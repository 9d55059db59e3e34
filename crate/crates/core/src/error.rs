use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate example id `{id}` at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("label `{label}` is not valid under the {schema} schema")]
    InvalidLabel { label: String, schema: String },

    #[error("class `{class}` has {count} examples, need at least {needed}")]
    TooFewExamples {
        class: String,
        count: usize,
        needed: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("embedding dimension mismatch: file has {found}, expected {expected}")]
    EmbeddingDim { expected: usize, found: usize },

    #[error("backward pass failed: {0}")]
    Backward(String),

    #[error("optimizer step without gradients")]
    GradientsUnset,

    #[error("non-finite loss at epoch {epoch}, batch {batch}; parameter norms: {norms}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        norms: String,
    },

    #[error("artifact format version {found} is not supported (expected {expected})")]
    ArtifactVersion { expected: u32, found: u32 },

    #[error("artifact is corrupt: {0}")]
    Corrupt(String),

    #[error("{what} hash mismatch: artifact has {artifact}, configuration gives {config}")]
    HashMismatch {
        what: &'static str,
        artifact: String,
        config: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
