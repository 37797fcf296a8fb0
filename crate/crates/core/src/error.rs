use thiserror::Error;

/// Errors raised across the simulation suite.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("maximum number of steps exceeded at t = {t}")]
    MaxStepsExceeded { t: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("angular form rejected near a pole at t = {t} (sin(theta) = {sin_theta:.3e})")]
    PoleProximity { t: f64, sin_theta: f64 },

    #[error("no stationary solution: drive {epsilon} exceeds the stationary branch limit {limit}")]
    NoStationarySolution { epsilon: f64, limit: f64 },

    #[error("trajectory too short: {samples} samples in the analysis window, need at least {required}")]
    TooShort { samples: usize, required: usize },

    #[error("density matrix lost positivity at t = {t}: min eigenvalue {min_eigenvalue:.3e}")]
    PositivityViolation { t: f64, min_eigenvalue: f64 },

    #[error("steady state is degenerate: {count} eigenvalues within tolerance of zero")]
    DegenerateSteadyState { count: usize },

    #[error("memory budget exceeded: {required_bytes} bytes required, budget {budget_bytes}")]
    MemoryBudget { required_bytes: u64, budget_bytes: u64 },

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),

    #[error("linear solver failed: {0}")]
    Singular(String),

    #[error("averaging window [{t0}, {t1}] outside trajectory span [{start}, {end}]")]
    WindowOutOfRange { t0: f64, t1: f64, start: f64, end: f64 },

    #[error("transverse amplitude collapsed at t = {t}; phase undefined")]
    AmplitudeCollapse { t: f64 },

    #[error("window estimate failed: {0}")]
    EstimateFailed(String),

    #[error("point cannot be classified: {0}")]
    Unclassifiable(String),

    #[error("rescaled data of different sizes do not overlap")]
    InsufficientOverlap,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
