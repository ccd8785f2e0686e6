use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    /// Instability guard: the simulated pose left the workspace bound.
    #[error("simulation diverged at tick {tick}: |x| = {norm:.4} exceeds workspace bound {bound}")]
    Diverged { tick: u64, norm: f64, bound: f64 },

    /// The predictor requires a gapless tick stream.
    #[error("tick discontinuity: expected tick {expected}, got {got}")]
    TickDiscontinuity { expected: u64, got: u64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
