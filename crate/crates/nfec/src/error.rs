use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("unsupported code spec: {0}")]
    UnsupportedCode(String),
    #[error("rank deficiency: {0}")]
    RankDeficient(String),
    #[error("guard violation: {0}")]
    GuardViolation(String),
    #[error("alist parse error: {0}")]
    AlistParse(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
