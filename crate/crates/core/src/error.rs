use thiserror::Error;

/// Errors raised by grid, kernel, solver and quantizer operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid has {cells} cells, above the cap of {cap}")]
    TooManyCells { cells: usize, cap: usize },
    #[error("grid mismatch: {0}")]
    GridMismatch(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("negative density value {value} at cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("probability vector sums to {sum}, defect above renormalization threshold")]
    NotNormalized { sum: f64 },
    #[error("row {row} sums to {sum}")]
    RowNotStochastic { row: usize, sum: f64 },
    #[error("measure has mass {mass} on cell {cell} where the reference measure vanishes")]
    AbsoluteContinuityViolation { cell: usize, mass: f64 },
    #[error("invariant measure is not unique: {closed_classes} closed communicating classes")]
    NonUniqueInvariant { closed_classes: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("iterate exceeds majorant density by {excess:e} at cell {cell} (iteration {iteration})")]
    MajorantViolation { iteration: usize, cell: usize, excess: f64 },
    #[error("invariance residual {residual:e} exceeds {tolerance:e}")]
    InvarianceViolation { residual: f64, tolerance: f64 },
    #[error("kernel row for state {state}, action {action} is identically zero")]
    ZeroRow { state: usize, action: usize },
    #[error("bin {bin} has {cells} cells but {actions} support actions")]
    InsufficientCells { bin: usize, cells: usize, actions: usize },
    #[error("codepoint {codepoint} has no containing cell in the source grid")]
    CodepointLookup { codepoint: usize },
    #[error("kernel has no density representation")]
    MissingDensity,
    #[error("policy sequence member {index} failed: {source}")]
    SequenceMember {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
