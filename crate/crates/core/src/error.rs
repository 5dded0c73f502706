use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid simplex: {0}")]
    InvalidSimplex(String),

    #[error("parameter out of range: {0}")]
    InvalidRange(String),

    #[error("supercritical parameters: branching ratio {ratio} >= 1")]
    Supercritical { ratio: f64 },

    #[error("bin width must be positive, got {0}")]
    NonPositiveDelta(f64),

    #[error("beta = {0} is outside (0, 1); the decay rate is undefined")]
    BetaOutOfRange(f64),

    #[error("negative Poisson rate {0}")]
    NegativeRate(f64),

    #[error("event cap of {cap} exceeded at t = {time}; parameters are supercritical or mis-scaled")]
    ExplosionGuard { cap: usize, time: f64 },

    #[error("event sequence is empty")]
    EmptySequence,

    #[error("enumeration too large: {0}")]
    TooLarge(String),

    #[error("numerical underflow at bin {bin}: {context}")]
    NumericalUnderflow { bin: usize, context: String },

    #[error("unsupported number of true states {0} (expected 1, 2 or 3)")]
    UnsupportedQStar(usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
