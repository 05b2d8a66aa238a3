use thiserror::Error;

use crate::expr::ParseError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid field definition: {0}")]
    InvalidField(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("cometric has rank {found} at {point:?}, declared rank is {expected}")]
    RankMismatch {
        expected: usize,
        found: usize,
        point: Vec<f64>,
    },

    #[error("cometric signature ({negative}-, {positive}+) at {point:?} does not match declared index {index} and rank {rank}")]
    SignatureMismatch {
        negative: usize,
        positive: usize,
        index: usize,
        rank: usize,
        point: Vec<f64>,
    },

    #[error("vector is not horizontal (distance to the distribution {distance:e})")]
    NotHorizontal { distance: f64 },

    #[error("covector is not an annihilator (|g v| = {residual:e})")]
    NotAnnihilator { residual: f64 },

    #[error("covector lies in the annihilator; nothing to test modulo S^perp")]
    AnnihilatorInput,

    #[error("Γ(ξ, ·) is not injective (smallest singular value {smallest:e})")]
    NotInjective { smallest: f64 },

    #[error("trajectory blew up after t = {last_valid_t}")]
    BlowUp { last_valid_t: f64 },

    #[error("Hamiltonian drift {drift:e} at t = {t} exceeds {limit:e}")]
    HamiltonianDrift { drift: f64, t: f64, limit: f64 },

    #[error("causal character changed along the extremal at t = {t}")]
    CausalFlip { t: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
