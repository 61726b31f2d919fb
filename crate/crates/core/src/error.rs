use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("profile evaluated at the singular point")]
    SingularPoint,
    #[error("out of regime: {0}")]
    OutOfRegime(String),
    #[error("positivity lost: {0}")]
    PositivityLoss(String),
    #[error("no quench detected")]
    NoQuench,
    #[error("invalid seed: {0}")]
    InvalidSeed(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("search box does not straddle the trapped seed: {0}")]
    BoxDoesNotStraddle(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
