use thiserror::Error;

/// Errors produced by the solver suite.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("basis mismatch: expected {expected} entries, got {got}")]
    BasisMismatch { expected: usize, got: usize },

    #[error("non-finite value produced by the nonlinearity at node {node}")]
    NonFinite { node: usize },

    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),

    #[error("gap condition violated: Lipschitz constant n = {n} is not below the spectral gap c = {c}")]
    GapViolated { n: f64, c: f64 },

    #[error("more than one eigenvalue interacts with the nonlinearity (modes {modes:?}, n = {n})")]
    MultipleInteraction { modes: Vec<usize>, n: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e}, t = {t:?})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        t: Option<f64>,
    },

    #[error("ill-conditioned horizontal block (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("eigenvalue gap collapsed to {gap:e} at t = {t} inside a critical neighborhood")]
    EigGapCollapse { t: f64, gap: f64 },

    #[error("could not bracket a Fucik pair: {0}")]
    FucikLocationFailed(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
