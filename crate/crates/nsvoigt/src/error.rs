use thiserror::Error;

/// Errors produced by grid construction, solvers and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid config: {path}: {reason}")]
    InvalidConfig { path: String, reason: String },

    #[error("wall-based mixing-length profile on a fully periodic grid")]
    ProfileNeedsWalls,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("{solver} did not converge: residual {residual:.3e} after {iterations} iterations")]
    SolverDiverged {
        solver: &'static str,
        residual: f64,
        iterations: usize,
    },

    #[error("Picard iteration did not converge: last update {residual:.3e} after {iterations} iterations")]
    PicardDiverged { residual: f64, iterations: usize },

    #[error("advective CFL violated: dt = {dt:.3e} exceeds stable limit {dt_max:.3e}")]
    CflViolation { dt: f64, dt_max: f64 },

    #[error("Cholesky factorization of (I + A) failed; assembly is inconsistent")]
    GalerkinNotSpd,

    #[error("non-decreasing function required for the Gronwall envelope")]
    GronwallDecreasing,

    #[error("coupled iteration did not converge: change {residual:.3e} after {iterations} sweeps")]
    CouplingDiverged { residual: f64, iterations: usize },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
