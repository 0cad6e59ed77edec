use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: expected 3 tab-separated fields, found {found}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        found: usize,
    },

    #[error("train split is empty")]
    EmptyTrainSplit,

    #[error("infeasible synthetic graph: {0}")]
    InfeasibleSynthetic(String),

    #[error("{kind} id {id} out of range (size {size})")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        size: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged at step {step}: loss is {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("checkpoint magic mismatch: expected {expected:?}, found {found:?}")]
    MagicMismatch { expected: Vec<u8>, found: Vec<u8> },

    #[error("checkpoint truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("checkpoint dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("checkpoint metadata: {0}")]
    Metadata(String),

    #[error("query has no target entity")]
    MissingTarget,

    #[error("k = {k} out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("training sample {0} has a target outside its candidate set")]
    TargetNotInCandidates(String),

    #[error("unknown {what} {name:?}")]
    Unknown { what: &'static str, name: String },

    #[error("empty prediction set")]
    EmptyPredictions,

    #[error("generator transport error: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
