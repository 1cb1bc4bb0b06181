use thiserror::Error;

/// Errors produced by the homogenization workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular lattice basis (|det| = {det:e})")]
    SingularLattice { det: f64 },

    #[error("coefficient sample at node {node} is not Hermitian (relative defect {defect:e})")]
    NotHermitian { node: String, defect: f64 },

    #[error("coefficient sample at node {node} is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { node: String, min_eigenvalue: f64 },

    #[error("symbol rank condition violated: alpha0 = {alpha0:e}, alpha1 = {alpha1:e}")]
    SymbolRank { alpha0: f64, alpha1: f64 },

    #[error("grid under-resolves the ε-cell along axis {axis}: {points_per_period:.2} points per period < {minimum}")]
    UnderResolved {
        axis: usize,
        points_per_period: f64,
        minimum: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("box margin: {0}")]
    Margin(String),

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("iterative solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("system with {size} unknowns exceeds the modal size cap {cap}; use the leapfrog path")]
    SizeCap { size: usize, cap: usize },

    #[error("CFL violation: dt = {dt:e} exceeds {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("time {time} lies outside the sampled range [{start}, {end}]")]
    TimeOutOfRange { time: f64, start: f64, end: f64 },

    #[error("missing time samples: {0}")]
    MissingSamples(String),

    #[error("bracketing violated: {0}")]
    Bracketing(String),

    #[error("power iteration did not converge after {iterations} iterations; Rayleigh quotient history (last entries): {history:?}")]
    NoConvergence { iterations: usize, history: Vec<f64> },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
