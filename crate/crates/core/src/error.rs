use thiserror::Error;

/// Errors raised by frame computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid range: lo = {lo} exceeds hi = {hi}")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("weight {value} at index {index} is outside [0, 1]")]
    InvalidWeight { index: usize, value: f64 },

    #[error("not a frame: lower bound {lower} is not positive")]
    NotAFrame { lower: f64 },

    #[error("not Bessel: cell {cell} has infinite weight and a nonzero vector")]
    NotBessel { cell: usize },

    #[error("cell {cell} is an atom and cannot carry the fractional sub-weight {sub_weight} of {weight}")]
    Atomicity { cell: usize, sub_weight: f64, weight: f64 },

    #[error("atomic cell {cell} has oscillation {oscillation} above the required {required}")]
    IrreducibleCell { cell: usize, oscillation: f64, required: f64 },

    #[error("refinement did not converge: {0}")]
    RefinementLimit(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("search budget exceeded: {needed} assignments requested, cap is {cap}")]
    SearchBudget { needed: f64, cap: f64 },

    #[error("partition search failed at level {level}: {reason}")]
    SearchFailed {
        level: usize,
        reason: String,
        /// Index blocks completed before the failure.
        completed_blocks: Vec<Vec<usize>>,
    },

    #[error("degenerate scalars: {0}")]
    DegenerateScalars(String),

    #[error("discretization too coarse: measured bounds ({lower}, {upper}) miss the window; try an approximation accuracy below {suggested}")]
    DiscretizationTooCoarse { lower: f64, upper: f64, suggested: f64 },

    #[error("admissibility sum {sum} is not within 10% of 1")]
    Admissibility { sum: f64 },

    #[error("malformed document: {0}")]
    Malformed(String),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad or malformed input data.
    Input,
    /// A mathematical precondition does not hold.
    Hypothesis,
    /// A configured search budget was exhausted.
    Budget,
}

impl FrameError {
    pub fn class(&self) -> ErrorClass {
        match self {
            FrameError::InvalidInput(_)
            | FrameError::Shape(_)
            | FrameError::InvalidRange { .. }
            | FrameError::InvalidWeight { .. }
            | FrameError::Malformed(_) => ErrorClass::Input,
            FrameError::SearchBudget { .. } | FrameError::SearchFailed { .. } | FrameError::RefinementLimit(_) => {
                ErrorClass::Budget
            }
            _ => ErrorClass::Hypothesis,
        }
    }
}

pub type Result<T> = std::result::Result<T, FrameError>;
