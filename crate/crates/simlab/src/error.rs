use modsel_core::ModselError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("ridge system is not positive definite")]
    Singular,
    #[error(transparent)]
    Core(#[from] ModselError),
}

pub type Result<T> = std::result::Result<T, SimError>;
