use thiserror::Error;

/// Everything that can go wrong while building states or running a protocol.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension must be at least 1")]
    EmptyDimension,

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("cannot normalize a zero vector")]
    ZeroVector,

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("rank {rank} outside 1..={dim}")]
    RankOutOfRange { rank: usize, dim: usize },

    #[error("reference ket is not unbiased with respect to the standard basis (max |<a|b0>| deviation {deviation:e})")]
    NotUnbiased { deviation: f64 },

    #[error("operator is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("basis is not orthonormal (max Gram deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("basis and eigenvalue lists differ in length ({basis} vs {eigenvalues})")]
    EigenvalueCount { basis: usize, eigenvalues: usize },

    #[error("invalid pointer grid: {0}")]
    InvalidGrid(String),

    #[error("pointer width sigma = {sigma} needs half-width >= {required}, grid has {half_width}")]
    GridTooNarrow { sigma: f64, half_width: f64, required: f64 },

    #[error("invalid pointer parameters: {0}")]
    InvalidPointerParams(String),

    #[error("pointer {pointer}: accumulated shift {shift:.4} exceeds wrap-around limit {limit:.4}")]
    WrapAround { pointer: usize, shift: f64, limit: f64 },

    #[error("post-selection probability {prob:e} below threshold {threshold:e}")]
    PostSelectionImpossible { prob: f64, threshold: f64 },

    #[error("coupling g*t must be strictly positive, got {0}")]
    ZeroCoupling(f64),

    #[error("pointer index {index} out of range ({count} pointers)")]
    PointerIndex { index: usize, count: usize },

    #[error("pointer indices must be distinct")]
    PointerCollision,

    #[error("joint state of {elements} amplitudes exceeds the limit of {limit}")]
    StateTooLarge { elements: usize, limit: usize },

    #[error("insufficient shots: {0}")]
    InsufficientShots(String),

    #[error("need at least {required} sweep points, got {found}")]
    InsufficientPoints { required: usize, found: usize },

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
