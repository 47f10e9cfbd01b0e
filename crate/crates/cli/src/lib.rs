//! Command-line front end: JSON problem documents in, CSV trajectories and
//! JSON reports out, with exit codes that separate mathematical outcomes
//! (3 pseudo-only, 4 non-convergence, 5 verification failure) from input
//! errors (1).

pub mod commands;
pub mod document;
pub mod error;
pub mod output;

pub use commands::{cmd_solve_linear, cmd_solve_nonlinear, cmd_vdp_torus, ResultDocument, TorusOptions};
pub use document::{Overrides, ProblemDocument};
pub use error::{CliError, Exit};
