use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for {num_qubits} qubits")]
    QubitOutOfRange { index: usize, num_qubits: usize },

    #[error("two-qubit gate addresses qubit {0} twice")]
    RepeatedQubit(usize),

    #[error("non-finite gate angle {0}")]
    NonFiniteAngle(f64),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("{family} requires an even number of qubits, got {num_qubits}")]
    OddQubitCount { family: &'static str, num_qubits: usize },

    #[error("expected {expected} circuit parameters, got {got}")]
    ParameterCount { expected: usize, got: usize },

    #[error("parameter slot {0} does not exist or is not bound to a Pauli rotation")]
    UnknownParameter(usize),

    /// A forced measurement outcome has vanishing Born probability.
    #[error("outcome {outcome} on qubit {qubit} has probability {probability:e}")]
    ZeroProbabilityBranch {
        qubit: usize,
        outcome: u8,
        probability: f64,
    },

    #[error("malformed measurement record: {0}")]
    MalformedRecord(String),

    #[error("invalid subsystem: {0}")]
    InvalidSubsystem(String),

    #[error("subsystem of {0} qubits exceeds the reduced density matrix limit")]
    SubsystemTooLarge(usize),

    #[error("{measurements} measurements exceed the exact enumeration cap of {cap}; use sampled mode")]
    EnumerationCap { measurements: usize, cap: usize },

    #[error("invalid table: {0}")]
    Table(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("resume refused: config hash {found} in {path} does not match {expected}")]
    ResumeMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
