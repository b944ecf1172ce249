use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("dimension {0} is not 2^n for a supported qubit count")]
    NotQubitDimension(usize),

    #[error("qubit count {0} is outside the supported range")]
    QubitCountOutOfRange(usize),

    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("trace is {0}, expected 1")]
    InvalidTrace(f64),

    #[error("operator is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("state vector is not normalised (norm {0})")]
    NotNormalized(f64),

    #[error("subsystem {index} out of range for {qubits} qubits")]
    SubsystemOutOfRange { index: usize, qubits: usize },

    #[error("empty subsystem selection")]
    EmptySubsystem,

    #[error("Jacobi eigensolver did not converge after {0} sweeps")]
    EigenNonConvergence(usize),

    #[error("invalid measurement model: {0}")]
    InvalidModel(String),

    #[error("invalid count data: {0}")]
    InvalidCounts(String),

    #[error("label mismatch: {0}")]
    LabelMismatch(String),

    #[error("model is tomographically incomplete; missing directions: {0}")]
    TomographicallyIncomplete(String),

    #[error("target is not expressible in the span of the measured operators (residual {0:.3e})")]
    TargetNotInSpan(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid SDP: {0}")]
    InvalidProblem(String),

    #[error("SDP solver failed: {0}")]
    Solver(String),

    #[error("Hamiltonian coefficients too large (max entry {0:.3e} > 50)")]
    HamiltonianOverflow(f64),

    #[error("information projection did not converge after {iterations} iterations (marginal residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("malformed document: {0}")]
    Document(String),

    #[error("infeasible data: {0}")]
    InfeasibleData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
