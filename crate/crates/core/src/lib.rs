//! Periodic boundary value problems for abstract second-order equations in
//! phase-pair form, solved through the spectral decomposition of a positive
//! self-adjoint operator.
//!
//! The linear layer builds the evolution group, its Cesàro projector, the
//! generalized Green operator and pseudosolutions. The nonlinear layer adds
//! the generating amplitude equations, the linearization `B₀` and the
//! Lyapunov–Schmidt iteration. [`vdp`] applies both to a truncated van der
//! Pol system.

pub mod error;
pub mod exec;
pub mod forcing;
pub mod linear;
pub mod lyapunov_schmidt;
pub mod newton;
pub mod quadrature;
pub mod spectral;
pub mod vdp;

pub use error::{Error, Result};
pub use forcing::{ForcingFunction, SampledForcing, Slot, TrigTerm};
pub use linear::{
    BvpProblem, Classification, LinearSettings, Pseudosolution, SolvabilityReport, Trajectory,
};
pub use lyapunov_schmidt::{GeneratingFamily, IterationSettings, NonlinearRhs, RootSettings};
pub use quadrature::TimeGrid;
pub use spectral::{BlockDiagonalMap, PhaseVector, SpectralOperator};
