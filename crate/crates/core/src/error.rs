use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time grid error: {0}")]
    Grid(String),

    #[error("mesh mismatch: left has {left} interior nodes, right has {right}")]
    MeshMismatch { left: usize, right: usize },

    #[error("operator kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("requested time {requested} lies outside the sampled window [{lo}, {hi}]")]
    WindowExhausted { requested: f64, lo: f64, hi: f64 },

    #[error("Newton iteration failed at t = {time}: residual {residual:e} after {iterations} iterations")]
    NewtonDiverged {
        time: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("pullback sequence is not Cauchy: gaps {gaps:?}")]
    PullbackNotCauchy { gaps: Vec<f64> },

    #[error("ergodic rate not negative: time average {average} over [{from}, {to}]")]
    ErgodicRateNotNegative { average: f64, from: f64, to: f64 },

    #[error("no bump of radius {radius} fits into a domain of length {length}")]
    NoBumpFits { radius: f64, length: f64 },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(err: std::io::Error) -> Self {
        LabError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
