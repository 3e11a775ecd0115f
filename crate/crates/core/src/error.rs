use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("input is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("coherent-state truncation deficit {deficit:e} at site {site} not reachable below local dimension {max_dim}")]
    TruncationUnreachable { site: usize, deficit: f64, max_dim: usize },

    #[error("Krylov exponential did not converge at site {site} (error estimate {estimate:e})")]
    KrylovNonConvergence { site: usize, estimate: f64 },

    #[error("measurement annihilated the state (success probability {0:e})")]
    MeasurementAnnihilated(f64),

    #[error("self-consistency did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
