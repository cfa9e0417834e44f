use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("Fock level {level} out of range for truncation dimension {dim}")]
    LevelOutOfRange { level: usize, dim: usize },

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("state dimension must be at least 1")]
    EmptyState,

    #[error("amplitudes contain non-finite values")]
    NonFinite,

    #[error("state is not normalized (norm² = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },

    #[error("truncation to dimension {dim} captures norm {captured}, below required {required}")]
    TruncationTooSmall { dim: usize, captured: f64, required: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("mode index {mode} not present in a composite with {modes} mode(s)")]
    MissingMode { mode: usize, modes: usize },

    #[error("population {leaked:e} leaked past the truncation of mode {mode}")]
    TruncationLeak { mode: usize, leaked: f64 },

    #[error("ill-conditioned fit: condition number {condition:e} exceeds {threshold:e}")]
    IllConditioned { condition: f64, threshold: f64 },

    #[error("k-means requires at least one cluster")]
    NoClusters,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("expected {expected} initial centroids, got {got}")]
    CentroidCount { expected: usize, got: usize },

    #[error("k = {k} is out of range for a training set of {len} states")]
    NeighborCount { k: usize, len: usize },

    #[error("duplicate state id `{0}`")]
    DuplicateId(String),
}
