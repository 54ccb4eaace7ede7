use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("registry: {0}")]
    Registry(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite loss at {0}")]
    NonFinite(String),
    #[error(transparent)]
    Core(#[from] pharmvig_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("safetensors: {0}")]
    SafeTensors(String),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> NeuralError {
    let path = path.into();
    move |source| NeuralError::Io { path, source }
}
