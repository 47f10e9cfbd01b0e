use thiserror::Error;

use crate::lyapunov_schmidt::IterationFailure;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode index {index} out of range for {n_modes} modes")]
    ModeIndex { index: usize, n_modes: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("Green block of mode {mode} is numerically singular (det = {det:e})")]
    Conditioning { mode: usize, det: f64 },

    #[error(
        "series parameter mu = {mu} outside the convergence region at mode {mode} \
         (requires |1 - mu| < {bound})"
    )]
    SeriesDomain { mu: f64, mode: usize, bound: f64 },

    #[error("boundary-value problem has no classical solution (obstruction norm {obstruction_norm:e}); use the pseudosolution")]
    NotSolvable { obstruction_norm: f64 },

    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NewtonNonConvergence { iterations: usize, residual: f64 },

    #[error("analytic and finite-difference Jacobians disagree by {discrepancy:e} (tolerance {tol:e})")]
    JacobianMismatch { discrepancy: f64, tol: f64 },

    #[error("correction iteration did not converge: {}", .0.reason)]
    IterationNonConvergence(Box<IterationFailure>),
}
