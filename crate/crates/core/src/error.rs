use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("spectrum is not Hermitian (relative defect {0:e})")]
    NotHermitian(f64),
    #[error("Poisson ratio {0} outside (-1, 1/2)")]
    PoissonOutOfRange(f64),
    #[error("invalid symbol: {0}")]
    InvalidSymbol(String),
    #[error("symbol does not reduce to half-Laplacian on 1D profiles (ratio spread {0:e})")]
    NotReducible(f64),
    #[error("symbol bound violated: {0}")]
    BoundViolated(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid too large for the O(N^2) oracle: {0} points (limit {1})")]
    TooLarge(usize, usize),
    #[error("kernel is not positive in the fit window at |w| = {0}")]
    NonPositiveKernel(f64),
    #[error("shift {0} exceeds X/4 = {1}")]
    ShiftTooLarge(f64, f64),
    #[error("not a transition profile: no sign change along x")]
    NotTransition,
    #[error("trivial fixed point; adjust initial amplitude")]
    TrivialFixedPoint,
    #[error("eigen-iteration breakdown: {0}; retry with more Lanczos steps or a different start vector")]
    Breakdown(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
