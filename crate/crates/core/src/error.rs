use thiserror::Error;

/// Errors raised by the spectral classification routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SpectralError {
    #[error("non-finite coordinates or Hessian entries")]
    NonFinite,
    #[error("iterative eigensolver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("deflated space has dimension {0}, need at least 2")]
    TooFewModes(usize),
}

/// Errors raised by the particle dynamics.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SspdError {
    #[error("degenerate ensemble: all weights are zero")]
    DegenerateWeights,
    #[error("invalid weight {value} at index {index}")]
    InvalidWeight { index: usize, value: f64 },
    #[error("resampling ancestor {0} has zero weight")]
    ZeroWeightAncestor(usize),
    #[error("non-finite state for particle {particle} at step {step}; the time step is likely too large")]
    BlowUp { particle: usize, step: usize },
    #[error("weighted tangent vectors cancel, direction undefined")]
    UndefinedDirection,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PdeError {
    #[error("time step {dt:.4e} exceeds the explicit stability bound {bound:.4e}")]
    Unstable { dt: f64, bound: f64 },
    #[error("non-finite value at time {time:.4e}; explicit scheme diverged (bound {bound:.4e})")]
    Diverged { time: f64, bound: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field has {got} components, expected {expected}")]
    Components { expected: usize, got: usize },
    #[error("potential must be two-dimensional, got dimension {0}")]
    Dimension(usize),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PotentialError {
    #[error("unknown potential '{0}'")]
    Unknown(String),
    #[error("atoms {0} and {1} coincide")]
    CoincidentAtoms(usize, usize),
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("expected coordinates of dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SearchError {
    #[error("gradient descent did not converge in {iterations} iterations (gradient norm {grad_norm:.3e})")]
    DescentBudget { iterations: usize, grad_norm: f64 },
    #[error("gradient descent diverged after {halvings} step halvings")]
    DescentDiverged { halvings: usize },
    #[error("descent ended at a point that is not a minimum (lambda1 = {0:.3e})")]
    NotAMinimum(f64),
    #[error("at least one seed minimum is required")]
    NoSeeds,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Sspd(#[from] SspdError),
}

/// Crate-level error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Sspd(#[from] SspdError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for configuration/validation problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Potential(_) => 2,
            Error::Pde(PdeError::Unstable { .. }) | Error::Pde(PdeError::InvalidGrid(_)) => 2,
            Error::Sspd(SspdError::InvalidConfig(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
