use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {0} actual vs {1} predicted")]
    LengthMismatch(usize, usize),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Models(#[from] surro_models::Error),
    #[error(transparent)]
    Core(#[from] surro_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
