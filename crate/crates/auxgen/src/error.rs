use thiserror::Error;

#[derive(Debug, Error)]
pub enum AuxError {
    #[error(transparent)]
    Tensor(#[from] auxgen_tensor::TensorError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("config: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training aborted: {0}")]
    Train(String),
}

pub type Result<T> = std::result::Result<T, AuxError>;
