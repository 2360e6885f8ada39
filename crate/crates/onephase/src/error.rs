use thiserror::Error;

/// Errors surfaced by grid construction, kernel evaluation, solvers and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),
    #[error("point ({0}, {1}) lies outside the grid hull")]
    OutsideHull(f64, f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid boundary data: {0}")]
    InvalidBoundary(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("ball radius {r} is below the resolution floor {floor}")]
    BallTooSmall { r: f64, floor: f64 },
    #[error("ball of radius {r} around ({x}, {y}) violates the required boundary margin")]
    BallNearBoundary { x: f64, y: f64, r: f64 },
    #[error("index {0} out of range ({1})")]
    IndexOutOfRange(usize, String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
