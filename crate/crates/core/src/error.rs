use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("subsystem dimension {0} is invalid, dimensions must be at least 2")]
    InvalidDimension(usize),

    #[error("amplitude count {got} does not match dimensions {dims:?} (expected {expected})")]
    LengthMismatch {
        dims: Vec<usize>,
        expected: usize,
        got: usize,
    },

    #[error("label count {got} does not match subsystem count {expected}")]
    LabelMismatch { expected: usize, got: usize },

    #[error("state vector has zero norm")]
    ZeroNorm,

    #[error("operator of size {op} does not match target space of size {targets}")]
    OperatorMismatch { op: usize, targets: usize },

    #[error("operator entry count {got} does not match size {dim}x{dim}")]
    MalformedOperator { dim: usize, got: usize },

    #[error("subsystem {0} is targeted more than once")]
    RepeatedTarget(usize),

    #[error("subsystem index {index} out of range for a state with {count} subsystems")]
    TargetOutOfRange { index: usize, count: usize },

    #[error("no subsystem labelled {0:?}")]
    UnknownLabel(String),

    #[error("measurement basis is not orthonormal (max Gram deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error(
        "measurement basis has {got} vectors, a complete basis of this space needs {expected}"
    )]
    IncompleteBasis { expected: usize, got: usize },

    #[error("operator is not unitary (max deviation {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("forced outcome {outcome} has probability {probability:e}, below the 1e-15 floor")]
    ImpossibleOutcome { outcome: usize, probability: f64 },

    #[error("outcome {outcome} is out of range for a measurement with {count} outcomes")]
    OutcomeOutOfRange { outcome: usize, count: usize },

    #[error("states have different dimensions: {left:?} vs {right:?}")]
    DimsMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("state needs {required} amplitudes, above the limit of {limit} (set QTELEPORT_MAX_AMPLITUDES to raise it)")]
    SizeGuard { required: u128, limit: u128 },

    #[error("enumeration needs {required} branches, above the limit of {limit}")]
    EnumerationGuard { required: u128, limit: u128 },

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid input state: {0}")]
    InvalidInput(String),

    #[error("invalid forced outcome: {0}")]
    InvalidOutcome(String),

    #[error("branch probabilities sum to {0}, expected 1")]
    ProbabilityLeak(f64),
}

impl Error {
    /// Whether this error comes from one of the problem-size guards.
    pub fn is_guard(&self) -> bool {
        matches!(
            self,
            Error::SizeGuard { .. } | Error::EnumerationGuard { .. }
        )
    }
}
