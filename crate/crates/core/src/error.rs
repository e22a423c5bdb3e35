use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a documented constraint.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Rejection sampling of the inclusion geometry never produced an admissible draw.
    #[error("rejection sampling failed after {attempts} attempts: {reason}")]
    Infeasible { attempts: usize, reason: String },

    /// A Krylov iteration stopped before reaching the requested tolerance.
    #[error("{solver} did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    /// Krylov breakdown (a vanishing inner product).
    #[error("{solver} broke down at iteration {iteration}")]
    Breakdown { solver: &'static str, iteration: usize },

    /// An inclusion resonance: sin(kappa * rho) vanishes.
    #[error("resonant inclusion: |sin(kappa rho)| = {0:.3e}")]
    Resonance(f64),

    /// A cell index is not part of the medium sample.
    #[error("cell {0:?} is not part of the sample")]
    MissingCell([i64; 3]),

    /// The voxel geometry is too coarse for the requested operation.
    #[error("geometry: {0}")]
    Geometry(String),

    /// Two fields or grids that must agree do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A statistical input is inconsistent (not PSD, too few samples, ...).
    #[error("statistics: {0}")]
    Statistics(String),

    /// Enumeration state space above the configured bound.
    #[error("state space of {states} exceeds the bound {bound}")]
    StateSpace { states: u128, bound: u128 },

    /// A numerical self-check failed.
    #[error("verification failed: {0}")]
    Verification(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NotConverged { .. } | Error::Breakdown { .. } => 3,
            Error::Verification(_) => 4,
            _ => 1,
        }
    }
}
