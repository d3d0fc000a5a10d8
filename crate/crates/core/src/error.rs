use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("Hilbert-space dimension {dim} exceeds the configured cap {cap}")]
    DimensionCap { dim: u128, cap: usize },

    #[error("site {site} out of range for a lattice of {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("linear system is singular or ill-conditioned: {0}")]
    Singular(String),

    #[error("zero eigenvalue is degenerate (second smallest |eigenvalue| {gap:.3e}); steady state is not unique")]
    DegenerateSteadyState { gap: f64 },

    #[error("no convergence after {iterations} iterations (best residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("time integration unstable: {0}")]
    Unstable(String),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("Fock cutoff n_max = {n_max} insufficient (norm deficit {deficit:.3e})")]
    TruncationInsufficient { n_max: usize, deficit: f64 },

    #[error("operator basis does not match density-matrix basis: {0}")]
    BasisMismatch(String),

    #[error("corner space too small: discarded weight {discarded:.3e} exceeds bound {bound:.3e}")]
    CornerTooSmall { discarded: f64, bound: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no crossing found: {0}")]
    NoCrossing(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}
