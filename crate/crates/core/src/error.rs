use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("duplicate target qubit {0}")]
    DuplicateTarget(usize),
    #[error("qubit {qubit} out of range for a {num_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },
    #[error("amplitude vector is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("matrix is not unitary (max deviation {0:e})")]
    NotUnitary(f64),
    #[error("zero vector at index {0}")]
    ZeroVector(usize),
    #[error("feature {0} has zero spread across the dataset")]
    ZeroVariance(usize),
    #[error("unsupported feature length {0}")]
    UnsupportedLength(usize),
    #[error("circuit synthesis failed: fidelity {fidelity} (residual {residual:e})")]
    Synthesis { fidelity: f64, residual: f64 },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("post-selection probability is zero; conditional distribution undefined")]
    ZeroSuccessProbability,
    #[error("requested measurement branch has zero probability")]
    ZeroProbabilityBranch,
    #[error("class {label} has {count} samples, at least {needed} required")]
    TooFewSamples { label: String, count: usize, needed: usize },
    #[error("expected exactly two classes, found {0}")]
    ClassCount(usize),
    #[error("unsupported step count {0}")]
    UnsupportedSteps(usize),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("missing Kraus operator for edge ({0}, {1})")]
    MissingKraus(usize, usize),
    #[error("stop condition not reached within {0} attempts")]
    CapReached(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unsupported format `{0}`")]
    UnknownFormat(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
