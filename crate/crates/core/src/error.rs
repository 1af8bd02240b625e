use thiserror::Error;

/// Errors raised by the numerical kernels, state constructors and Fisher routes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not Hermitian (max |H - H^dagger| entry = {deviation:e})")]
    NonHermitianInput { deviation: f64 },

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("trace {trace} exceeds one")]
    TraceExceedsOne { trace: f64 },

    #[error("trace {trace} is not one")]
    InvalidTrace { trace: f64 },

    #[error("rank {rank} is invalid for dimension {dim}")]
    InvalidRank { rank: usize, dim: usize },

    #[error("truncation m = {m} is outside 1..={dim}")]
    InvalidTruncation { m: usize, dim: usize },

    #[error("closed form requires m < rank, got m = {m} with rank {rank}")]
    TruncationNotStrict { m: usize, rank: usize },

    #[error("delta {delta:e} violates the trace guard delta^2 <= {bound:e}")]
    DeltaTooLarge { delta: f64, bound: f64 },

    #[error("empty or invalid delta grid: {0}")]
    InvalidDeltaGrid(String),

    #[error("extrapolation did not converge: successive extrapolants {previous} and {last} differ by {spread:e}")]
    NonConvergent { previous: f64, last: f64, spread: f64 },

    #[error("operator is not an orthogonal projector (idempotency residual {residual:e})")]
    NotAProjector { residual: f64 },

    #[error("Kraus operators violate the {class} condition (residual {residual:e})")]
    KrausCondition { class: &'static str, residual: f64 },

    #[error("two algebraic routes disagree: {first} vs {second}")]
    RouteMismatch { first: f64, second: f64 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
