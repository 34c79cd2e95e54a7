use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layer {layer} out of range for a model with {num_layers} layers")]
    LayerOutOfRange { layer: usize, num_layers: usize },

    #[error("context overflow: {needed} tokens needed but the context window holds {limit}")]
    ContextOverflow { needed: usize, limit: usize },

    #[error("sequence too short: {got} tokens, at least {need} required")]
    InsufficientLength { got: usize, need: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid contrast pair {pair_id}: {reason}")]
    InvalidPair { pair_id: String, reason: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("failed to record activations for pairs: {}", .0.join(", "))]
    PairRecording(Vec<String>),

    #[error("incompatible steering vector: {0}")]
    Compatibility(String),

    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("insufficient material: {0}")]
    InsufficientMaterial(String),

    #[error("value {value} out of range: {reason}")]
    OutOfRange { value: String, reason: String },

    #[error("adapter `{name}` failed: {reason}")]
    Adapter { name: String, reason: String },

    #[error("run failed: {failed} of {total} cells errored")]
    RunFailed { failed: usize, total: usize },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::CorruptFile {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Validation-class errors map to usage failures at the CLI boundary.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Adapter { .. } | Error::RunFailed { .. }
        )
    }
}
