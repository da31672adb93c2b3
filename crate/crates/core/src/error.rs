use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("propagation diverged at step {step}")]
    Propagation { step: u32 },
    #[error("pose sampling failed after {attempts} attempts")]
    Sampling { attempts: u32 },
    #[error("structural error: {0}")]
    Structure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
