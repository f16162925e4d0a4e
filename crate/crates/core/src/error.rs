use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("incompatible partitions: {0}")]
    IncompatiblePartitions(String),

    #[error("index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("lambda rule has no vector for partition {0}")]
    MissingPartition(String),

    #[error("invalid lambda rule: {0}")]
    InvalidLambda(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("non-finite value in grid function")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time points are not ordered within [0, t]")]
    UnorderedTimes,

    #[error("invalid time step: {0}")]
    InvalidTimeStep(String),

    #[error("time {t} beyond horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },

    #[error("component {component} out of range, bundle has {m}")]
    ComponentOutOfRange { component: usize, m: usize },

    #[error("chaos order {order} exceeds the configured maximum {max}")]
    OrderTooHigh { order: usize, max: usize },

    #[error("order {0} is constructed structurally but not verified; numeric integration refused")]
    OrderNotVerified(usize),

    #[error("point {0} lies outside the grid")]
    OutsideGrid(f64),

    #[error("negative input: {0}")]
    NegativeInput(String),

    #[error("starting points are not sorted")]
    UnsortedStarts,

    #[error("not enough Wiener drivers: need {need}, bundle has {have}")]
    NotEnoughDrivers { need: usize, have: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is singular at step {0}")]
    Singular(usize),

    #[error("chain is incompatible with the start partition: {0}")]
    IncompatibleChain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
