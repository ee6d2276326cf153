use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty table")]
    EmptyTable,
    #[error("duplicate unit id {0:?}")]
    DuplicateId(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column:?}: missing value")]
    MissingValue { row: usize, column: String },
    #[error("frame has no {0}")]
    MissingFrameData(&'static str),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("did not converge after {iterations} iterations (max residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unit {0} is in the sample but has zero inclusion probability")]
    ZeroInclusion(usize),
    #[error("units {0} and {1} are both sampled but have zero joint inclusion probability")]
    ZeroJointInclusion(usize, usize),
    #[error("population of {0} units is too large for exhaustive enumeration")]
    TooLarge(usize),
    #[error("{0} has no closed-form design probabilities; use an empirical design")]
    NoClosedForm(&'static str),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Whether the error comes from a numerical procedure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Numerical(_)
                | Error::ZeroInclusion(_)
                | Error::ZeroJointInclusion(..)
        )
    }
}
