use thiserror::Error;

/// Errors produced by estimation, inference and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("discrete column required (column {0} is continuous)")]
    DiscreteColumnRequired(usize),

    #[error("continuous column required (column {0} is already discrete)")]
    ContinuousColumnRequired(usize),

    #[error("column index {index} out of range ({ncols} columns)")]
    ColumnOutOfRange { index: usize, ncols: usize },

    #[error("empty cell: no observations with D={treat} in cell {cell}")]
    EmptyCell { treat: u8, cell: f64 },

    #[error("cell {0} is not covered by the first stage")]
    UncoveredCell(f64),

    #[error("propensity degenerate in cell {cell}: {value}")]
    PropensityDegenerate { cell: f64, value: f64 },

    #[error("cannot form {requested} bins: only {achievable} achievable from {distinct} distinct values")]
    TooFewDistinct {
        requested: usize,
        achievable: usize,
        distinct: usize,
    },

    #[error("degenerate moment: zero variance for moment {0}")]
    DegenerateMoment(usize),

    #[error("qp did not converge after {iterations} iterations (kkt residual {residual:e})")]
    QpNotConverged { iterations: usize, residual: f64 },

    #[error("no crossing found in bisection bracket after {doublings} doublings")]
    NoCrossing { doublings: usize },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("index {index} out of range ({len} policies)")]
    PolicyIndex { index: usize, len: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
