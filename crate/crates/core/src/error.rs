use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed grid header: {0}")]
    MalformedHeader(String),
    #[error("non-integer cell {value:?} at row {row}, col {col}")]
    NonIntegerCell { row: usize, col: usize, value: String },
    #[error("cell count mismatch: expected {expected}, found {found}")]
    CellCountMismatch { expected: usize, found: usize },
    #[error("token id {id} at row {row}, col {col} is outside the vocabulary (size {limit})")]
    IdOutOfRange { row: usize, col: usize, id: u32, limit: u32 },
    #[error("token id {id} at position {position} is outside the vocabulary (size {limit})")]
    SequenceIdOutOfRange { position: usize, id: u32, limit: u32 },
    #[error("grid dimensions must be positive, got {height}x{width}")]
    EmptyGrid { height: usize, width: usize },
    #[error("unsupported vocabulary format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("merge {index} references token {id}, which is not defined before new id {new_id}")]
    ForwardReference { index: usize, id: u32, new_id: u32 },
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),
    #[error("decode requires a layout sidecar under the agnostic orientation policy")]
    LayoutRequired,
    #[error("decode requires source dimensions")]
    DimsRequired,
    #[error("decode failed: {0}")]
    Decode(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("kernel is not ergodic: {0}")]
    NonErgodic(String),
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("dimension mismatch: kernel has {kernel} states, distribution has {dist}")]
    DimensionMismatch { kernel: usize, dist: usize },
    #[error("bound inapplicable: minimum transition probability is zero")]
    ZeroDelta,
    #[error("dictionary size {dictionary_size} too small: epsilon = {epsilon:.6} >= 1")]
    EpsilonTooLarge { dictionary_size: u64, epsilon: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
