use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: |A - A*| = {deviation:e} exceeds tolerance {tolerance:e}")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("matrix is not an orthogonal projection: {0}")]
    NotProjection(String),

    #[error("invalid exponent p = {0}")]
    InvalidExponent(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("point {0:?} lies outside the unit domain")]
    OutsideDomain(Vec<f64>),

    #[error("dilation factor must be an odd positive integer, got {0}")]
    EvenDilation(u32),

    #[error("level {level} outside the admissible range [{min}, {max}]")]
    LevelOutOfRange { level: i64, min: i64, max: i64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("precondition f_0 <= t violated at cell {cell}: largest eigenvalue {lambda_max} > t = {t}")]
    ThresholdPrecondition { cell: usize, lambda_max: f64, t: f64 },

    #[error("non-finite kernel value at cells ({row}, {col})")]
    NonFiniteKernel { row: usize, col: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
