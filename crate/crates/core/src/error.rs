use thiserror::Error;

use crate::model::Family;

pub type Result<T> = std::result::Result<T, RabiError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RabiError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("energy {energy} lies within {distance:e} of the {family:?} pole n = {n}")]
    PoleProximity {
        family: Family,
        n: usize,
        energy: f64,
        distance: f64,
    },

    #[error("coefficient series overflowed at n = {n} despite rescaling")]
    Overflow { n: usize },

    #[error("root near E = {energy} drifted by {drift:e} under N -> N + {extra}")]
    UnstableRoot { energy: f64, drift: f64, extra: usize },

    #[error("diagonalization not converged: {0}")]
    ConvergenceFailure(String),

    #[error("energy {energy} is not on the {family:?} pole line m = {m}")]
    NotOnPole { family: Family, m: usize, energy: f64 },

    #[error("the {family:?} pole m = {m} coincides with pole n = {other_n} of the other family")]
    PoleCoincidence {
        family: Family,
        m: usize,
        other_n: usize,
    },

    #[error("overlap table not converged in truncation: max change {0:e}")]
    TruncationNotConverged(f64),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for RabiError {
    fn from(e: std::io::Error) -> Self {
        RabiError::Io(e.to_string())
    }
}
