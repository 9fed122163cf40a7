use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("qubit {qubit} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    #[error("two-qubit gate acts twice on qubit {0}")]
    DuplicateTargets(usize),
    #[error("gate {0} needs an angle")]
    MissingAngle(&'static str),
    #[error("gate {0} takes no angle")]
    UnexpectedAngle(&'static str),
    #[error("expected {expected} parameters, got {actual}")]
    ParameterCount { expected: usize, actual: usize },
    #[error("expected {expected} data angles, got {actual}")]
    DataAngleCount { expected: usize, actual: usize },
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("value {value} outside [{lower}, {upper}]")]
    OutOfRange { value: f64, lower: f64, upper: f64 },
    #[error("distributions live on different bin sets")]
    BinSetMismatch,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("unknown feature {0}")]
    UnknownFeature(String),
    #[error("feature {0} has zero variance")]
    ZeroVariance(usize),
    #[error("condition required: {0}")]
    Condition(String),
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("loss became NaN at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
