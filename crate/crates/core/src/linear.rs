//! Linear periodic boundary-value problem
//!
//! ```text
//! φ'(t) = A φ(t) + f(t),   φ(0) − φ(w) = α,
//! ```
//!
//! with `A` the rotation generator of [`SpectralOperator`]. Writing
//! `φ(t) = U(t)(c + ∫₀ᵗ U(−τ) f(τ) dτ)` reduces the boundary condition to
//! `(I − U(w)) c = g` with `g = α + U(w) ∫₀ʷ U(−τ) f(τ) dτ`. The system is
//! solvable iff the Cesàro projector `U₀(w)` annihilates `g`; otherwise the
//! generalized Green operator still yields the least-squares family.

use nalgebra::{Matrix2, SVD};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::forcing::ForcingFunction;
use crate::quadrature::{cumulative_simpson, TimeGrid, DEFAULT_GRID_SIZE};
use crate::spectral::{
    check_period, Block, BlockDiagonalMap, PhaseVector, SpectralOperator, DEFAULT_RESONANCE_TOL,
};

/// Default threshold on `‖U₀(w)g‖` separating solvable from pseudo-only problems.
pub const DEFAULT_SOLVABILITY_TOL: f64 = 1e-8;
/// Default series parameter for [`green_series`].
pub const DEFAULT_MU: f64 = 1.5;
/// Blocks of `I − (U(w) − U₀(w))` with smaller determinant are rejected.
const SINGULAR_DET: f64 = 1e-24;

const CLASSIFICATION_NOTE: &str = "finite truncation: the range of I - U(w) is closed, so strong \
    generalized solutions coincide with classical ones; every problem yields either a solution \
    family or a minimal-residual pseudosolution family";

#[derive(Debug, Clone, PartialEq)]
pub struct BvpProblem {
    pub op: SpectralOperator,
    pub w: f64,
    pub alpha: PhaseVector,
    pub forcing: ForcingFunction,
}

impl BvpProblem {
    pub fn new(
        op: SpectralOperator,
        w: f64,
        alpha: PhaseVector,
        forcing: ForcingFunction,
    ) -> Result<Self> {
        check_period(w)?;
        alpha.check_modes(op.n_modes())?;
        if !alpha.is_finite() {
            return Err(Error::Config("boundary gap has non-finite entries".into()));
        }
        forcing.validate(op.n_modes())?;
        Ok(Self { op, w, alpha, forcing })
    }

    /// Homogeneous periodic problem: `α = 0`, `f ≡ 0`.
    pub fn homogeneous(op: SpectralOperator, w: f64) -> Result<Self> {
        let n = op.n_modes();
        Self::new(op, w, PhaseVector::zeros(n), ForcingFunction::Zero)
    }

    pub fn n_modes(&self) -> usize {
        self.op.n_modes()
    }

    pub fn grid(&self, grid_size: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.w, grid_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSettings {
    pub grid_size: usize,
    pub resonance_tol: f64,
    pub solvability_tol: f64,
}

impl Default for LinearSettings {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_GRID_SIZE,
            resonance_tol: DEFAULT_RESONANCE_TOL,
            solvability_tol: DEFAULT_SOLVABILITY_TOL,
        }
    }
}

/// States on the uniform grid `0 = t₀ < … < t_M = w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<PhaseVector>,
}

impl Trajectory {
    pub fn zeros(grid: TimeGrid, n_modes: usize) -> Self {
        Self {
            grid,
            states: vec![PhaseVector::zeros(n_modes); grid.len()],
        }
    }

    pub fn n_modes(&self) -> usize {
        self.states[0].n_modes()
    }

    pub fn first(&self) -> &PhaseVector {
        &self.states[0]
    }

    pub fn last(&self) -> &PhaseVector {
        self.states.last().expect("trajectory has at least three states")
    }

    /// `max_j max_i |a_j,i − b_j,i|`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).max_abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.states.iter().map(PhaseVector::max_abs).fold(0.0, f64::max)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            grid: self.grid,
            states: self.states.iter().zip(&other.states).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            grid: self.grid,
            states: self.states.iter().zip(&other.states).map(|(a, b)| a - b).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Solvable,
    PseudoOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolvabilityReport {
    pub classification: Classification,
    /// `U₀(w)(α + ∫₀ʷ U(−τ) f(τ) dτ)`.
    pub obstruction: PhaseVector,
    pub obstruction_norm: f64,
    pub resonance_flags: Vec<bool>,
    /// `‖U₀(w)(α + ∫U⁻¹f) − U₀(w)g‖`, zero up to the resonance tolerance.
    pub g_route_discrepancy: f64,
    pub note: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryCheck {
    pub ode_residual: f64,
    pub boundary_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pseudosolution {
    pub trajectory: Trajectory,
    /// `c = (I − U(w))⁺ g + U₀(w) c̄`.
    pub initial_value: PhaseVector,
    /// `‖(I − U(w)) c − g‖`.
    pub residual: f64,
    pub report: SolvabilityReport,
}

/// Per-mode blocks of the Moore–Penrose inverse of `I − U(w)`, evaluated as
/// `(I − (U(w) − U₀(w)))⁻¹ − U₀(w)`.
pub fn green_blocks(op: &SpectralOperator, w: f64, resonance_tol: f64) -> Result<BlockDiagonalMap> {
    let u = op.monodromy(w)?;
    let p = op.cesaro_projector_closed(w, resonance_tol);
    let blocks = u
        .blocks()
        .iter()
        .zip(p.blocks())
        .enumerate()
        .map(|(mode, (ub, pb))| {
            let m = Block::identity() - (ub - pb);
            let det = m.determinant();
            if det.abs() <= SINGULAR_DET {
                return Err(Error::Conditioning { mode, det });
            }
            let inv = Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det;
            Ok(inv - pb)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockDiagonalMap::from_blocks(blocks))
}

/// `G[g] = (I − U(w))⁺ g`; zero on resonant blocks.
pub fn green_pseudoinverse(
    op: &SpectralOperator,
    w: f64,
    g: &PhaseVector,
    resonance_tol: f64,
) -> Result<PhaseVector> {
    green_blocks(op, w, resonance_tol)?.apply(g)
}

/// Per-block constants of the double series behind [`green_series`].
#[derive(Debug, Clone, Copy)]
struct SeriesBlock {
    /// `U(w) − U₀(w)` on this block.
    v: Block,
    projector: Block,
    /// `‖V‖/μ`, ratio of the inner Neumann series.
    inner_ratio: f64,
    /// `(μ − 1)‖(μ − V)⁻¹‖`, ratio of the outer series.
    outer_ratio: f64,
    resolvent_norm: f64,
}

fn spectral_norm(b: &Block) -> f64 {
    SVD::new(*b, false, false).singular_values.max()
}

fn series_blocks(op: &SpectralOperator, w: f64, mu: f64, resonance_tol: f64) -> Result<Vec<SeriesBlock>> {
    if !(mu > 1.0 && mu.is_finite()) {
        return Err(Error::SeriesDomain { mu, mode: 0, bound: f64::NAN });
    }
    let u = op.monodromy(w)?;
    let p = op.cesaro_projector_closed(w, resonance_tol);
    u.blocks()
        .iter()
        .zip(p.blocks())
        .enumerate()
        .map(|(mode, (ub, pb))| {
            let v = ub - pb;
            let shifted = Block::identity() * mu - v;
            let sigma_min = SVD::new(shifted, false, false).singular_values.min();
            let resolvent_norm = 1.0 / sigma_min;
            let bound = sigma_min;
            if (mu - 1.0).abs() >= bound {
                return Err(Error::SeriesDomain { mu, mode, bound });
            }
            Ok(SeriesBlock {
                v,
                projector: *pb,
                inner_ratio: spectral_norm(&v) / mu,
                outer_ratio: (mu - 1.0) * resolvent_norm,
                resolvent_norm,
            })
        })
        .collect()
}

/// Generalized Green operator in series form,
///
/// ```text
/// ( Σ_{k<K} (μ−1)^k { Σ_{l<L} μ^{−l−1} (U(w) − U₀(w))^l }^{k+1} − U₀(w) ) g.
/// ```
///
/// The convergence condition `|1 − μ| < 1/‖R_μ‖` is checked per block with the
/// resolvent of `U(w) − U₀(w)`; parameters outside it are rejected.
pub fn green_series(
    op: &SpectralOperator,
    w: f64,
    g: &PhaseVector,
    mu: f64,
    outer_terms: usize,
    inner_terms: usize,
    resonance_tol: f64,
) -> Result<PhaseVector> {
    g.check_modes(op.n_modes())?;
    if outer_terms == 0 || inner_terms == 0 {
        return Err(Error::Config("series needs at least one term in each sum".into()));
    }
    let blocks = series_blocks(op, w, mu, resonance_tol)?;
    let mapped = exec::map_slice(&blocks, |b| {
        // inner sum by Horner: Σ_{l<L} μ^{−l−1} V^l
        let mut s = Block::zeros();
        for _ in 0..inner_terms {
            s = (Block::identity() + b.v * s) / mu;
        }
        let mut power = s;
        let mut coeff = 1.0;
        let mut total = Block::zeros();
        for _ in 0..outer_terms {
            total += power * coeff;
            power *= s;
            coeff *= mu - 1.0;
        }
        total - b.projector
    });
    Ok(PhaseVector::from_pairs(
        mapped.iter().zip(g.pairs()).map(|(m, p)| m * p).collect(),
    ))
}

/// Bound on the operator-norm truncation error of [`green_series`], maximised
/// over blocks: outer tail `‖S‖q^K/(1−q)` plus the inner tail propagated
/// through the outer sum.
pub fn series_truncation_bound(
    op: &SpectralOperator,
    w: f64,
    mu: f64,
    outer_terms: usize,
    inner_terms: usize,
    resonance_tol: f64,
) -> Result<f64> {
    let blocks = series_blocks(op, w, mu, resonance_tol)?;
    Ok(blocks
        .iter()
        .map(|b| {
            let q = b.outer_ratio;
            let a = b.inner_ratio;
            let outer = b.resolvent_norm * q.powi(outer_terms as i32) / (1.0 - q);
            let inner = a.powi(inner_terms as i32) / (mu * (1.0 - a)) / (1.0 - q).powi(2);
            outer + inner
        })
        .fold(0.0, f64::max))
}

/// Samples of `f`, their pull-backs `U(−t_j) f(t_j)` and running integrals.
struct ForcingQuadrature {
    running: Vec<PhaseVector>,
}

impl ForcingQuadrature {
    fn from_samples(op: &SpectralOperator, grid: &TimeGrid, samples: &[PhaseVector]) -> Self {
        let pulled = exec::map_range(grid.len(), |j| {
            op.evolve_unchecked(-grid.node(j), &samples[j])
        });
        Self {
            running: cumulative_simpson(grid, &pulled),
        }
    }

    fn new(problem: &BvpProblem, grid: &TimeGrid) -> Result<Self> {
        let samples = problem.forcing.sample(grid, problem.n_modes())?;
        Ok(Self::from_samples(&problem.op, grid, &samples))
    }

    fn total(&self) -> &PhaseVector {
        self.running.last().expect("grid has nodes")
    }

    /// `φ_j = U(t_j)(c + ∫₀^{t_j} U(−τ) f(τ) dτ)`.
    fn trajectory(&self, op: &SpectralOperator, grid: TimeGrid, c: &PhaseVector) -> Trajectory {
        let states = exec::map_range(grid.len(), |j| {
            op.evolve_unchecked(grid.node(j), &(c + &self.running[j]))
        });
        Trajectory { grid, states }
    }
}

/// `∫₀ʷ U(−τ) f(τ) dτ` by composite Simpson on `grid_size` panels.
pub fn integrate_forcing(problem: &BvpProblem, grid_size: usize) -> Result<PhaseVector> {
    let grid = problem.grid(grid_size)?;
    Ok(ForcingQuadrature::new(problem, &grid)?.total().clone())
}

/// [`integrate_forcing`] together with the Richardson error estimate
/// `‖I_{2M} − I_M‖/15` from a doubled grid.
pub fn integrate_forcing_checked(problem: &BvpProblem, grid_size: usize) -> Result<(PhaseVector, f64)> {
    let coarse = integrate_forcing(problem, grid_size)?;
    let fine = integrate_forcing(problem, 2 * grid_size)?;
    let estimate = (&fine - &coarse).norm() / 15.0;
    Ok((fine, estimate))
}

/// `g = α + U(w) ∫₀ʷ U(−τ) f(τ) dτ`.
pub fn assemble_g(problem: &BvpProblem, grid_size: usize) -> Result<PhaseVector> {
    let integral = integrate_forcing(problem, grid_size)?;
    Ok(g_from_integral(problem, &integral))
}

fn g_from_integral(problem: &BvpProblem, integral: &PhaseVector) -> PhaseVector {
    &problem.alpha + &problem.op.evolve_unchecked(problem.w, integral)
}

fn report_from_integral(
    problem: &BvpProblem,
    integral: &PhaseVector,
    g: &PhaseVector,
    settings: &LinearSettings,
) -> SolvabilityReport {
    let op = &problem.op;
    let projector = op.cesaro_projector_closed(problem.w, settings.resonance_tol);
    let obstruction = projector.apply_unchecked(&(&problem.alpha + integral));
    // U₀(w)U(w) = U₀(w): projecting g is the same test
    let via_g = projector.apply_unchecked(g);
    let obstruction_norm = obstruction.norm();
    SolvabilityReport {
        classification: if obstruction_norm <= settings.solvability_tol {
            Classification::Solvable
        } else {
            Classification::PseudoOnly
        },
        g_route_discrepancy: (&obstruction - &via_g).norm(),
        obstruction,
        obstruction_norm,
        resonance_flags: op.resonant_modes(problem.w, settings.resonance_tol),
        note: CLASSIFICATION_NOTE,
    }
}

/// Projected solvability test `U₀(w)(α + ∫₀ʷ U(−τ) f(τ) dτ) = 0`.
pub fn solvability_condition(problem: &BvpProblem, settings: &LinearSettings) -> Result<SolvabilityReport> {
    let integral = integrate_forcing(problem, settings.grid_size)?;
    let g = g_from_integral(problem, &integral);
    Ok(report_from_integral(problem, &integral, &g, settings))
}

struct LinearPipeline {
    report: SolvabilityReport,
    g: PhaseVector,
    initial_value: PhaseVector,
    trajectory: Trajectory,
}

fn run_linear(problem: &BvpProblem, cbar: &PhaseVector, settings: &LinearSettings) -> Result<LinearPipeline> {
    cbar.check_modes(problem.n_modes())?;
    let grid = problem.grid(settings.grid_size)?;
    let quad = ForcingQuadrature::new(problem, &grid)?;
    let g = g_from_integral(problem, quad.total());
    let report = report_from_integral(problem, quad.total(), &g, settings);
    let projector = problem.op.cesaro_projector_closed(problem.w, settings.resonance_tol);
    let particular = green_pseudoinverse(&problem.op, problem.w, &g, settings.resonance_tol)?;
    let initial_value = &projector.apply_unchecked(cbar) + &particular;
    let trajectory = quad.trajectory(&problem.op, grid, &initial_value);
    Ok(LinearPipeline { report, g, initial_value, trajectory })
}

/// Member `c̄` of the solution family
/// `φ(t, c̄) = U(t)U₀(w)c̄ + (G[f, α])(t)` of a solvable problem.
pub fn solve_linear(problem: &BvpProblem, cbar: &PhaseVector, settings: &LinearSettings) -> Result<Trajectory> {
    let run = run_linear(problem, cbar, settings)?;
    if run.report.classification == Classification::PseudoOnly {
        return Err(Error::NotSolvable {
            obstruction_norm: run.report.obstruction_norm,
        });
    }
    Ok(run.trajectory)
}

/// Least-squares member of the family: minimises `‖(I − U(w))c − g‖` and
/// always exists. For solvable problems it coincides with [`solve_linear`].
pub fn pseudosolve(problem: &BvpProblem, cbar: &PhaseVector, settings: &LinearSettings) -> Result<Pseudosolution> {
    let run = run_linear(problem, cbar, settings)?;
    let u = problem.op.monodromy(problem.w)?;
    let residual = (&(&run.initial_value - &u.apply_unchecked(&run.initial_value)) - &run.g).norm();
    Ok(Pseudosolution {
        trajectory: run.trajectory,
        initial_value: run.initial_value,
        residual,
        report: run.report,
    })
}

/// Rotation generator `A`: `(x, y) ↦ (√λ y, −√λ x)` per mode.
pub(crate) fn generator(op: &SpectralOperator, phi: &PhaseVector) -> PhaseVector {
    PhaseVector::from_pairs(
        phi.pairs()
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let s = op.frequency(k);
                nalgebra::Vector2::new(s * p.y, -s * p.x)
            })
            .collect(),
    )
}

/// Max over interior nodes of `‖(φ_{j+1} − φ_{j−1})/2h − (Aφ_j + rhs_j)‖`.
pub(crate) fn ode_residual(op: &SpectralOperator, traj: &Trajectory, rhs: &[PhaseVector]) -> f64 {
    let h = traj.grid.step();
    let m = traj.grid.intervals;
    exec::map_range(m - 1, |i| {
        let j = i + 1;
        let mut d = (&traj.states[j + 1] - &traj.states[j - 1]).scale(0.5 / h);
        d = &d - &generator(op, &traj.states[j]);
        (&d - &rhs[j]).norm()
    })
    .into_iter()
    .fold(0.0, f64::max)
}

/// Central-difference ODE residual and boundary residual `‖φ(0) − φ(w) − α‖`.
pub fn verify_trajectory(problem: &BvpProblem, traj: &Trajectory) -> Result<TrajectoryCheck> {
    traj.first().check_modes(problem.n_modes())?;
    let forcing = problem.forcing.sample(&traj.grid, problem.n_modes())?;
    Ok(TrajectoryCheck {
        ode_residual: ode_residual(&problem.op, traj, &forcing),
        boundary_residual: (&(traj.first() - traj.last()) - &problem.alpha).norm(),
    })
}

/// Green solve for data given as samples on `grid`, used by the nonlinear
/// correction step. With `project` set, the resonant part of the forcing,
/// `U(t)U₀(w)·(1/w)∫₀ʷ U(−τ) z(τ) dτ`, is removed first so that the particular
/// solution satisfies the boundary relation with gap `(I − U₀(w))·gap`.
/// Returns the trajectory and the removed obstruction `U₀(w)∫U(−τ)z`.
pub(crate) fn green_trajectory(
    op: &SpectralOperator,
    grid: TimeGrid,
    samples: &[PhaseVector],
    gap: &PhaseVector,
    project: bool,
    resonance_tol: f64,
) -> Result<(Trajectory, PhaseVector)> {
    let w = grid.period;
    let projector = op.cesaro_projector_closed(w, resonance_tol);
    let raw = ForcingQuadrature::from_samples(op, &grid, samples);
    let obstruction = projector.apply_unchecked(raw.total());
    let quad = if project {
        let mean = obstruction.scale(1.0 / w);
        let adjusted: Vec<PhaseVector> = exec::map_range(grid.len(), |j| {
            &samples[j] - &op.evolve_unchecked(grid.node(j), &mean)
        });
        ForcingQuadrature::from_samples(op, &grid, &adjusted)
    } else {
        raw
    };
    let g = gap + &op.evolve_unchecked(w, quad.total());
    let c = green_pseudoinverse(op, w, &g, resonance_tol)?;
    Ok((quad.trajectory(op, grid, &c), obstruction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::{Slot, TrigTerm};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{PI, TAU};

    fn op(l: &[f64]) -> SpectralOperator {
        SpectralOperator::new(l.to_vec()).unwrap()
    }

    fn resonant_drive() -> ForcingFunction {
        // f = (cos τ, −sin τ)
        ForcingFunction::Trig(vec![
            TrigTerm { mode: 0, slot: Slot::X, cos_amp: 1.0, sin_amp: 0.0, omega: 1.0 },
            TrigTerm { mode: 0, slot: Slot::Y, cos_amp: 0.0, sin_amp: -1.0, omega: 1.0 },
        ])
    }

    fn constant(p: f64, q: f64) -> ForcingFunction {
        ForcingFunction::Trig(vec![
            TrigTerm { mode: 0, slot: Slot::X, cos_amp: p, sin_amp: 0.0, omega: 0.0 },
            TrigTerm { mode: 0, slot: Slot::Y, cos_amp: q, sin_amp: 0.0, omega: 0.0 },
        ])
    }

    fn problem(l: f64, alpha: [f64; 2], forcing: ForcingFunction) -> BvpProblem {
        BvpProblem::new(op(&[l]), TAU, PhaseVector::from_arrays(&[alpha]), forcing).unwrap()
    }

    #[test]
    fn forcing_integrals() {
        let zero = problem(1.0, [0.0, 0.0], ForcingFunction::Zero);
        assert_eq!(integrate_forcing(&zero, 64).unwrap(), PhaseVector::zeros(1));
        // a full-period rotation of a constant integrates to zero
        let c = problem(1.0, [0.0, 0.0], constant(0.7, -1.3));
        assert!(integrate_forcing(&c, 256).unwrap().max_abs() < 1e-13);
        // U⁻¹(τ)f(τ) ≡ (1, 0)
        let r = problem(1.0, [0.0, 0.0], resonant_drive());
        let i = integrate_forcing(&r, 256).unwrap();
        assert_abs_diff_eq!(i.pair(0).x, TAU, epsilon = 1e-12);
        assert_abs_diff_eq!(i.pair(0).y, 0.0, epsilon = 1e-12);
        assert!(matches!(integrate_forcing(&r, 255), Err(Error::Config(_))));
        let (_, est) = integrate_forcing_checked(&r, 64).unwrap();
        assert!(est < 1e-12);
    }

    #[test]
    fn g_assembly() {
        let a = problem(1.0, [0.3, -0.2], ForcingFunction::Zero);
        assert_eq!(assemble_g(&a, 32).unwrap(), a.alpha);
        let c = problem(1.0, [0.0, 0.0], constant(1.0, 2.0));
        assert!(assemble_g(&c, 128).unwrap().max_abs() < 1e-13);
        let r = problem(1.0, [0.0, 0.0], resonant_drive());
        let g = assemble_g(&r, 128).unwrap();
        assert_abs_diff_eq!(g.pair(0).x, TAU, epsilon = 1e-12);
        assert_abs_diff_eq!(g.pair(0).y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn solvability_examples() {
        let s = LinearSettings::default();
        let trivial = problem(1.0, [0.0, 0.0], ForcingFunction::Zero);
        let rep = solvability_condition(&trivial, &s).unwrap();
        assert_eq!(rep.classification, Classification::Solvable);
        assert_eq!(rep.obstruction_norm, 0.0);

        let r = problem(1.0, [0.0, 0.0], resonant_drive());
        let rep = solvability_condition(&r, &s).unwrap();
        assert_eq!(rep.classification, Classification::PseudoOnly);
        assert_abs_diff_eq!(rep.obstruction.pair(0).x, TAU, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.obstruction_norm, TAU, epsilon = 1e-12);
        assert!(rep.g_route_discrepancy < 1e-12);
        assert_eq!(rep.resonance_flags, vec![true]);

        let nonres = problem(0.25, [3.0, -1.0], resonant_drive());
        let rep = solvability_condition(&nonres, &s).unwrap();
        assert_eq!(rep.classification, Classification::Solvable);
        assert_eq!(rep.obstruction_norm, 0.0);
    }

    #[test]
    fn green_pseudoinverse_examples() {
        let g = PhaseVector::from_arrays(&[[0.4, -1.1]]);
        let crit = SpectralOperator::critical(1, TAU).unwrap();
        assert!(green_pseudoinverse(&crit, TAU, &g, DEFAULT_RESONANCE_TOL).unwrap().max_abs() < 1e-15);
        let half = op(&[0.25]);
        let out = green_pseudoinverse(&half, TAU, &PhaseVector::from_arrays(&[[1.0, 0.0]]), 1e-9).unwrap();
        assert_abs_diff_eq!(out.pair(0).x, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out.pair(0).y, 0.0, epsilon = 1e-15);
        // closed-form inverse of I − R(θ): (1/(2 − 2cos θ))·[[1 − cos θ, sin θ], [−sin θ, 1 − cos θ]]
        for &theta in &[0.3, 1.7, 2.9, 4.4, 6.0] {
            let o = op(&[theta * theta]);
            let gv = PhaseVector::from_arrays(&[[0.8, -0.35]]);
            let out = green_pseudoinverse(&o, 1.0, &gv, 1e-9).unwrap();
            let d = 2.0 - 2.0 * theta.cos();
            let (s, c) = theta.sin_cos();
            let ex = ((1.0 - c) * 0.8 - s * 0.35) / d;
            let ey = (-s * 0.8 + (1.0 - c) * -0.35) / d;
            assert_abs_diff_eq!(out.pair(0).x, ex, epsilon = 1e-13);
            assert_abs_diff_eq!(out.pair(0).y, ey, epsilon = 1e-13);
        }
        // a block just outside a tight resonance tolerance is singular
        let near = op(&[(1.0f64 + 2e-14).powi(2)]);
        assert!(matches!(
            green_pseudoinverse(&near, TAU, &g, 1e-14),
            Err(Error::Conditioning { mode: 0, .. })
        ));
    }

    #[test]
    fn green_series_examples() {
        let crit = SpectralOperator::critical(2, TAU).unwrap();
        let zero = PhaseVector::zeros(2);
        assert_eq!(green_series(&crit, TAU, &zero, 1.5, 50, 50, 1e-9).unwrap().max_abs(), 0.0);
        // resonant block: Σ (μ−1)^k/μ^{k+1} → 1, minus the projector
        let g = PhaseVector::from_arrays(&[[1.0, 2.0], [-3.0, 0.5]]);
        let out = green_series(&crit, TAU, &g, 1.5, 200, 200, 1e-9).unwrap();
        assert!(out.max_abs() < 1e-12);
        let oracle: f64 = (0..200).map(|k| 0.5f64.powi(k) / 1.5f64.powi(k + 1)).sum();
        assert_abs_diff_eq!(oracle, 1.0, epsilon = 1e-15);

        let o = op(&[0.25, 2.0]);
        let g = PhaseVector::from_arrays(&[[1.0, 0.0], [0.2, -0.7]]);
        let a = green_series(&o, TAU, &g, 1.5, 200, 200, 1e-9).unwrap();
        let b = green_pseudoinverse(&o, TAU, &g, 1e-9).unwrap();
        assert!((&a - &b).max_abs() < 1e-10);
        assert!(series_truncation_bound(&o, TAU, 1.5, 200, 200, 1e-9).unwrap() < 1e-10);
        assert!(matches!(green_series(&o, TAU, &g, 1.0, 10, 10, 1e-9), Err(Error::SeriesDomain { .. })));
        assert!(matches!(green_series(&o, TAU, &g, 0.5, 10, 10, 1e-9), Err(Error::SeriesDomain { .. })));
    }

    #[test]
    fn solve_linear_examples() {
        let s = LinearSettings { grid_size: 512, ..Default::default() };
        let trivial = problem(1.0, [0.0, 0.0], ForcingFunction::Zero);
        let t = solve_linear(&trivial, &PhaseVector::zeros(1), &s).unwrap();
        assert_eq!(t.max_abs(), 0.0);

        let l = 2.25;
        let res = BvpProblem::homogeneous(op(&[l]), 4.0 * PI / 3.0).unwrap();
        let t = solve_linear(&res, &PhaseVector::from_arrays(&[[1.0, 0.0]]), &s).unwrap();
        for (j, st) in t.states.iter().enumerate() {
            let tj = t.grid.node(j);
            assert_abs_diff_eq!(st.pair(0).x, (1.5 * tj).cos(), epsilon = 1e-13);
            assert_abs_diff_eq!(st.pair(0).y, -(1.5 * tj).sin(), epsilon = 1e-13);
        }

        let nonres = problem(0.25, [1.0, 0.0], ForcingFunction::Zero);
        let t = solve_linear(&nonres, &PhaseVector::from_arrays(&[[5.0, 5.0]]), &s).unwrap();
        assert_abs_diff_eq!(t.first().pair(0).x, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.first().pair(0).y, 0.0, epsilon = 1e-15);
        let chk = verify_trajectory(&nonres, &t).unwrap();
        assert!(chk.boundary_residual < 1e-14);

        let r = problem(1.0, [0.0, 0.0], resonant_drive());
        assert!(matches!(
            solve_linear(&r, &PhaseVector::zeros(1), &s),
            Err(Error::NotSolvable { .. })
        ));
    }

    #[test]
    fn pseudosolve_examples() {
        let s = LinearSettings::default();
        let nonres = problem(0.25, [1.0, 0.3], constant(0.2, 0.1));
        let ps = pseudosolve(&nonres, &PhaseVector::zeros(1), &s).unwrap();
        assert!(ps.residual < 1e-14);
        let sol = solve_linear(&nonres, &PhaseVector::zeros(1), &s).unwrap();
        assert_eq!(ps.trajectory, sol);

        // resonant block with g = (γ, 0)
        let gamma = 0.75;
        let r = problem(1.0, [gamma, 0.0], ForcingFunction::Zero);
        let ps = pseudosolve(&r, &PhaseVector::zeros(1), &s).unwrap();
        assert!(ps.initial_value.max_abs() < 1e-15);
        assert_abs_diff_eq!(ps.residual, gamma, epsilon = 1e-15);
        assert_abs_diff_eq!(ps.residual, ps.report.obstruction_norm, epsilon = 1e-15);
    }

    #[test]
    fn verify_detects_wrong_trajectories() {
        let l: f64 = 2.0;
        let p = BvpProblem::homogeneous(op(&[l]), 1.0).unwrap();
        let grid = p.grid(64).unwrap();
        let phi = PhaseVector::from_arrays(&[[0.6, 0.8]]);
        let constant = Trajectory { grid, states: vec![phi.clone(); grid.len()] };
        let chk = verify_trajectory(&p, &constant).unwrap();
        assert_abs_diff_eq!(chk.ode_residual, l.sqrt() * phi.norm(), epsilon = 1e-12);
        assert_eq!(chk.boundary_residual, 0.0);
    }

    #[test]
    fn ode_residual_is_second_order() {
        // exact rotation trajectory: residual h²ω³r/6 + O(h⁴)
        let omega: f64 = 1.3;
        let p = BvpProblem::homogeneous(op(&[omega * omega]), 2.0).unwrap();
        let res = |m| {
            let grid = p.grid(m).unwrap();
            let states = grid
                .nodes()
                .map(|t| p.op.evolve(t, &PhaseVector::from_arrays(&[[1.0, 0.0]])).unwrap())
                .collect();
            let chk = verify_trajectory(&p, &Trajectory { grid, states }).unwrap();
            let h = grid.step();
            (chk.ode_residual, h * h * omega.powi(3) / 6.0)
        };
        for m in [64, 256, 1024] {
            let (r, taylor) = res(m);
            assert!((r / taylor - 1.0).abs() < 1e-2, "m = {m}: {r} vs {taylor}");
        }
    }

    #[test]
    fn projected_green_trajectory_is_periodic() {
        let crit = SpectralOperator::critical(2, TAU).unwrap();
        let grid = TimeGrid::new(TAU, 256).unwrap();
        let samples: Vec<_> = grid
            .nodes()
            .map(|t| PhaseVector::from_arrays(&[[t.cos(), 0.5], [(2.0 * t).sin(), t.cos() * t.sin()]]))
            .collect();
        let zero = PhaseVector::zeros(2);
        let (traj, obstruction) = green_trajectory(&crit, grid, &samples, &zero, true, 1e-9).unwrap();
        assert!(obstruction.norm() > 1.0);
        assert!((traj.first() - traj.last()).norm() < 1e-12);
        let (raw, _) = green_trajectory(&crit, grid, &samples, &zero, false, 1e-9).unwrap();
        assert!((raw.first() - raw.last()).norm() > 1.0);
    }
}
