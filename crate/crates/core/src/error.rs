use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("horizon {0} is too small (need T >= 4)")]
    HorizonTooSmall(usize),

    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("step size sequence is not decreasing at t={t}")]
    NotDecreasing { t: usize },

    #[error("unknown schedule family `{0}`")]
    UnknownFamily(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid sparsity s={s} for dimension d={d}")]
    InvalidSparsity { s: usize, d: usize },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("start point has dimension {got}, problem has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("trace does not contain iterates")]
    IteratesNotRecorded,

    #[error("trace does not contain the objective at t={0}")]
    ObjectiveNotRecorded(usize),

    #[error("averaging fraction {0} outside (0, 1] or yields an empty window")]
    InvalidFraction(f64),

    #[error("run with seed {seed} failed: {source}")]
    SeedFailed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("empty index range [{t0}, {t1}]")]
    EmptyRange { t0: usize, t1: usize },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("distribution support mismatch: {0}")]
    SupportMismatch(String),

    #[error("phase {i} out of range (need i <= {max})")]
    PhaseOutOfRange { i: usize, max: usize },

    #[error("step size at t={t} is not positive")]
    NonPositiveStep { t: usize },

    #[error("dyadic level {0} is too small")]
    LevelTooSmall(usize),

    #[error("step sequence is not defined up to t={0}")]
    InsufficientHorizon(u64),

    #[error("non-positive suboptimality {value} at T={horizon}; reference optimum is too weak")]
    NonPositiveSuboptimality { horizon: usize, value: f64 },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("report contains no series")]
    EmptyReport,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
