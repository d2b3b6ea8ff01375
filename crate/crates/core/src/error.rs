use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not unitary (defect {defect:.3e} exceeds {tol:.1e})")]
    NotUnitary { defect: f64, tol: f64 },
    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { index: usize, n_qubits: usize },
    #[error("unsupported qubit count {0}: {1}")]
    UnsupportedQubitCount(usize, String),
    #[error("invalid gate structure: {0}")]
    Structure(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("optimizer failure: {0}")]
    Optimizer(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
