use thiserror::Error;

use crate::tensor::{Charge, TensorError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("local configuration has charge {found}, requested sector {requested}")]
    SectorMismatch { found: Charge, requested: Charge },
    #[error("bond matrix at bond {bond} is near-singular (s_min/s_max = {ratio:e})")]
    SingularBond { bond: usize, ratio: f64 },
    #[error("vanishing overlap (fidelity {fidelity:e}); check that the initial state and target share a charge sector")]
    VanishingOverlap { fidelity: f64 },
    #[error("expectation value has imaginary part {0:e}; operator not Hermitian?")]
    NonHermitian(f64),
    #[error("dimension guard: {0}")]
    TooLarge(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{0} did not converge")]
    NoConvergence(String),
    #[error("format: {0}")]
    Format(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
