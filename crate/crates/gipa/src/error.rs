//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, GipaError>;

/// Errors emitted by tensor ops, graph construction, encoding, training and IO.
#[derive(Debug, Error)]
pub enum GipaError {
    /// Tensor shapes incompatible with the requested operation.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A node, edge or segment id outside its valid range.
    #[error("index out of range in {op}: {detail}")]
    Index { op: &'static str, detail: String },

    /// A precondition of an operation was violated.
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    /// Invalid run configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed dataset input, located by file and record number.
    #[error("ingestion error at {file}:{record}: {detail}")]
    Ingest {
        file: String,
        record: usize,
        detail: String,
    },

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// ROC-AUC is undefined for single-class inputs.
    #[error("ROC-AUC undefined: {0}")]
    UndefinedAuc(String),

    /// Checkpoint or encoder sidecar problems (version, shape validation).
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON / TOML encode or decode failure.
    #[error("serialization error: {0}")]
    Serde(String),
}

impl GipaError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        GipaError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn index(op: &'static str, detail: impl Into<String>) -> Self {
        GipaError::Index {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        GipaError::Contract {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn ingest(file: impl Into<String>, record: usize, detail: impl Into<String>) -> Self {
        GipaError::Ingest {
            file: file.into(),
            record,
            detail: detail.into(),
        }
    }
}

impl From<serde_json::Error> for GipaError {
    fn from(e: serde_json::Error) -> Self {
        GipaError::Serde(e.to_string())
    }
}

impl From<toml::de::Error> for GipaError {
    fn from(e: toml::de::Error) -> Self {
        GipaError::Serde(e.to_string())
    }
}

impl From<toml::ser::Error> for GipaError {
    fn from(e: toml::ser::Error) -> Self {
        GipaError::Serde(e.to_string())
    }
}
