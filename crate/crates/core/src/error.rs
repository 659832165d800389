use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("vector norm {0:e} is below the normalization floor")]
    ZeroNorm(f64),

    #[error("feature is not unit norm (norm = {0})")]
    NotNormalized(f64),

    #[error("class id {id} out of range for {len} labeled identities")]
    ClassOutOfRange { id: usize, len: usize },

    #[error("target probability is zero; log-likelihood is undefined")]
    DegenerateProbability,

    #[error("subset selects no logits")]
    EmptySubset,

    #[error("cannot keep {keep} of {total} indices")]
    SubsampleTooLarge { keep: usize, total: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("record file: {0}")]
    Record(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
