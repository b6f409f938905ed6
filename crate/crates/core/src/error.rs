use thiserror::Error;

/// Errors produced by the library layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("alpha must be nonnegative, got {0}")]
    NegativeAlpha(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("direction vector must have unit length, |e| = {0}")]
    NonUnitDirection(f64),

    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),

    #[error("invalid integrator config: {0}")]
    InvalidIntegratorConfig(String),

    #[error("non-finite value detected in {0}")]
    NonFinite(&'static str),

    #[error("riccati envelope has blown up: t = {t} >= 1/|d0| = {horizon}")]
    EnvelopeBlownUp { t: f64, horizon: f64 },

    #[error("d0 must be negative for the riccati envelope, got {0}")]
    NonNegativeD0(f64),

    #[error("no blow-up estimate: {0}")]
    NoEstimate(String),

    #[error("invalid experiment config: {0}")]
    InvalidExperiment(String),
}

pub type Result<T> = std::result::Result<T, Error>;
