use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("resolution too coarse: {0}")]
    Resolution(String),
    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),
    #[error("linear program failed: {0}")]
    Solver(String),
    #[error("iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("overflow guard: {0}")]
    Overflow(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
