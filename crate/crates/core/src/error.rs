//! Error type shared by the library and the CLI.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("positivity lost: {0}")]
    PositivityLost(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("blow-up: {0}")]
    BlowUp(String),
    #[error("invalid identity: {0}")]
    InvalidIdentity(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::InvalidIdentity(_) => 2,
            Error::PositivityLost(_) | Error::NoConvergence(_) | Error::BlowUp(_) | Error::Io(_) => 3,
            Error::Verification(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
