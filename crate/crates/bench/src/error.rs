use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] celldet_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },
}

pub type Result<T> = std::result::Result<T, BenchError>;
