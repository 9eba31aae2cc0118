use crate::distributions::{Period, UnitId};

#[derive(Debug, thiserror::Error)]
pub enum DiscoError {
    #[error("empty input")]
    EmptyInput,

    #[error("non-finite outcome value in row {row}")]
    NonFiniteValue { row: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unit {0} not present in the panel")]
    UnknownUnit(UnitId),

    #[error("unit {unit} has no observations in period {period}")]
    MissingCell { unit: UnitId, period: Period },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("solver did not converge after {iterations} iterations (KKT residual {kkt_residual:e})")]
    NoConvergence {
        iterations: usize,
        last_iterate: Vec<f64>,
        kkt_residual: f64,
    },

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("placebo run with unit {unit} as treated failed: {source}")]
    Placebo {
        unit: UnitId,
        #[source]
        source: Box<DiscoError>,
    },

    #[error("{dropped} of {requested} bootstrap replicates failed (more than 5%)")]
    TooManyDroppedReplicates { dropped: usize, requested: usize },

    #[error("aggregation: {0}")]
    Aggregation(String),

    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DiscoError>;
