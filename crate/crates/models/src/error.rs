use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error("model has not been trained")]
    UntrainedModel,
    #[error("numeric failure at epoch {epoch}: {what}")]
    NumericFailure { epoch: usize, what: String },
    #[error(transparent)]
    Core(#[from] surro_core::Error),
    #[error(transparent)]
    Tensor(#[from] surro_tensor::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}
