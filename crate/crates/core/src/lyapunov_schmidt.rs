//! Weakly nonlinear problem
//!
//! ```text
//! φ' = Aφ + ε Z(φ, t, ε) + f(t),   φ(0) − φ(w) = α.
//! ```
//!
//! Solutions branching from the generating family `φ₀(t, c̄)` of the linear
//! problem must have `c̄ = c⁰` with `F(c⁰) = 0`, where
//!
//! ```text
//! F(c̄) = U₀(w) ∫₀ʷ U(−τ) Z(φ₀(τ, c̄), τ, 0) dτ.
//! ```
//!
//! The correction `v = φ − φ₀(·, c⁰)` is computed by the iteration
//!
//! ```text
//! v̄_{k+1} = ε G[Z(φ₀ + v_k, ·, ε)],
//! c_k     = −B₀⁺ U₀(w) ∫₀ʷ U(−τ) { A₁(τ) v̄_k(τ) + R(v_k)(τ) } dτ,
//! v_{k+1} = U(t) U₀(w) c_k + v̄_{k+1},
//! ```
//!
//! with `B₀ = F'(c⁰)`, `A₁` the Fréchet derivative of `Z` along `φ₀` and
//! `R(v) = Z(φ₀ + v, t, ε) − Z(φ₀, t, 0) − A₁ v`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::forcing::Slot;
use crate::linear::{self, BvpProblem, LinearSettings, Trajectory};
use crate::newton::{self, NewtonSettings};
use crate::quadrature::{simpson, simpson_scalar_weights, TimeGrid};
use crate::spectral::{BlockDiagonalMap, PhaseVector, SpectralOperator};

/// Perturbation `Z(φ, t, ε)`, with an optional analytic Fréchet derivative
/// in interleaved coordinates `x₁, y₁, x₂, y₂, …`.
pub trait NonlinearRhs: Sync {
    fn eval(&self, phi: &PhaseVector, t: f64, eps: f64) -> PhaseVector;

    fn jacobian(&self, _phi: &PhaseVector, _t: f64, _eps: f64) -> Option<DMatrix<f64>> {
        None
    }
}

/// Analytic Jacobian if provided, central differences otherwise.
pub fn rhs_jacobian<Z: NonlinearRhs + ?Sized>(z: &Z, phi: &PhaseVector, t: f64, eps: f64) -> DMatrix<f64> {
    if let Some(j) = z.jacobian(phi, t, eps) {
        return j;
    }
    let x = phi.to_dvector();
    let f = |v: &DVector<f64>| {
        z.eval(&PhaseVector::from_dvector(v).expect("even length"), t, eps)
            .to_dvector()
    };
    newton::fd_jacobian(&f, &x, 1e-6)
}

/// `Z(φ) = Bφ` with a constant dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRhs {
    pub matrix: DMatrix<f64>,
}

impl NonlinearRhs for LinearRhs {
    fn eval(&self, phi: &PhaseVector, _t: f64, _eps: f64) -> PhaseVector {
        PhaseVector::from_dvector(&(&self.matrix * phi.to_dvector())).expect("square matrix")
    }

    fn jacobian(&self, _phi: &PhaseVector, _t: f64, _eps: f64) -> Option<DMatrix<f64>> {
        Some(self.matrix.clone())
    }
}

/// One factor `φ_{mode,slot}^power` of a monomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Factor {
    pub mode: usize,
    pub slot: Slot,
    pub power: u32,
}

/// `coeff · Π factors`, added to component `(mode, slot)` of `Z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolynomialTerm {
    pub mode: usize,
    pub slot: Slot,
    pub coeff: f64,
    pub factors: Vec<Factor>,
}

/// Autonomous, ε-independent polynomial perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialRhs {
    n_modes: usize,
    terms: Vec<PolynomialTerm>,
}

fn coord(mode: usize, slot: Slot) -> usize {
    2 * mode + slot.index()
}

impl PolynomialRhs {
    pub fn new(n_modes: usize, terms: Vec<PolynomialTerm>) -> Result<Self> {
        for t in &terms {
            let idx = std::iter::once(t.mode).chain(t.factors.iter().map(|f| f.mode));
            for m in idx {
                if m >= n_modes {
                    return Err(Error::ModeIndex { index: m, n_modes });
                }
            }
            if !t.coeff.is_finite() {
                return Err(Error::Config("polynomial coefficient is not finite".into()));
            }
        }
        Ok(Self { n_modes, terms })
    }

    pub fn terms(&self) -> &[PolynomialTerm] {
        &self.terms
    }
}

impl NonlinearRhs for PolynomialRhs {
    fn eval(&self, phi: &PhaseVector, _t: f64, _eps: f64) -> PhaseVector {
        let x = phi.to_dvector();
        let mut out = DVector::zeros(2 * self.n_modes);
        for t in &self.terms {
            let v: f64 = t
                .factors
                .iter()
                .map(|f| x[coord(f.mode, f.slot)].powi(f.power as i32))
                .product();
            out[coord(t.mode, t.slot)] += t.coeff * v;
        }
        PhaseVector::from_dvector(&out).expect("even length")
    }

    fn jacobian(&self, phi: &PhaseVector, _t: f64, _eps: f64) -> Option<DMatrix<f64>> {
        let x = phi.to_dvector();
        let n = 2 * self.n_modes;
        let mut jac = DMatrix::zeros(n, n);
        for t in &self.terms {
            let row = coord(t.mode, t.slot);
            for (i, fi) in t.factors.iter().enumerate() {
                if fi.power == 0 {
                    continue;
                }
                let mut d = t.coeff * fi.power as f64 * x[coord(fi.mode, fi.slot)].powi(fi.power as i32 - 1);
                for (l, fl) in t.factors.iter().enumerate() {
                    if l != i {
                        d *= x[coord(fl.mode, fl.slot)].powi(fl.power as i32);
                    }
                }
                jac[(row, coord(fi.mode, fi.slot))] += d;
            }
        }
        Some(jac)
    }
}

/// Coordinates of the fixed subspace `range U₀(w)`: both components of every
/// resonant mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResonantSubspace {
    pub modes: Vec<usize>,
    pub n_modes: usize,
}

impl ResonantSubspace {
    pub fn from_projector(p: &BlockDiagonalMap) -> Self {
        Self {
            modes: p
                .blocks()
                .iter()
                .enumerate()
                .filter(|(_, b)| b.abs().max() > 0.5)
                .map(|(k, _)| k)
                .collect(),
            n_modes: p.n_modes(),
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    fn coords(&self) -> impl Iterator<Item = usize> + '_ {
        self.modes.iter().flat_map(|&k| [2 * k, 2 * k + 1])
    }

    pub fn restrict(&self, v: &PhaseVector) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.modes.iter().flat_map(|&k| {
                let p = v.pair(k);
                [p.x, p.y]
            }),
        )
    }

    pub fn embed(&self, r: &DVector<f64>) -> PhaseVector {
        let mut v = PhaseVector::zeros(self.n_modes);
        for (i, &k) in self.modes.iter().enumerate() {
            v.pairs_mut()[k] = nalgebra::Vector2::new(r[2 * i], r[2 * i + 1]);
        }
        v
    }

    /// Rows and columns of a dense `2N × 2N` matrix on the subspace.
    pub fn restrict_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let idx: Vec<usize> = self.coords().collect();
        DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
    }
}

/// Generating family `φ₀(t, c̄) = U(t)U₀(w)c̄ + (G[f, α])(t)` of a solvable
/// linear problem, with the particular part cached.
#[derive(Debug, Clone)]
pub struct GeneratingFamily {
    problem: BvpProblem,
    settings: LinearSettings,
    grid: TimeGrid,
    projector: BlockDiagonalMap,
    subspace: ResonantSubspace,
    particular: Trajectory,
}

impl GeneratingFamily {
    pub fn new(problem: BvpProblem, settings: LinearSettings) -> Result<Self> {
        let n = problem.n_modes();
        let particular = linear::solve_linear(&problem, &PhaseVector::zeros(n), &settings)?;
        let projector = problem.op.cesaro_projector_closed(problem.w, settings.resonance_tol);
        let subspace = ResonantSubspace::from_projector(&projector);
        Ok(Self {
            grid: particular.grid,
            problem,
            settings,
            projector,
            subspace,
            particular,
        })
    }

    pub fn problem(&self) -> &BvpProblem {
        &self.problem
    }

    pub fn op(&self) -> &SpectralOperator {
        &self.problem.op
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn settings(&self) -> &LinearSettings {
        &self.settings
    }

    pub fn projector(&self) -> &BlockDiagonalMap {
        &self.projector
    }

    pub fn subspace(&self) -> &ResonantSubspace {
        &self.subspace
    }

    /// `φ₀(·, c̄)` on the grid.
    pub fn solution(&self, cbar: &PhaseVector) -> Result<Trajectory> {
        cbar.check_modes(self.problem.n_modes())?;
        let c = self.projector.apply_unchecked(cbar);
        let op = &self.problem.op;
        let states = exec::map_range(self.grid.len(), |j| {
            &self.particular.states[j] + &op.evolve_unchecked(self.grid.node(j), &c)
        });
        Ok(Trajectory { grid: self.grid, states })
    }

    /// `U₀(w) ∫₀ʷ U(−τ) s(τ) dτ` for samples `s` on the grid.
    pub fn project_integral(&self, samples: &[PhaseVector]) -> PhaseVector {
        let op = &self.problem.op;
        let pulled = exec::map_range(self.grid.len(), |j| {
            op.evolve_unchecked(-self.grid.node(j), &samples[j])
        });
        self.projector.apply_unchecked(&simpson(&self.grid, &pulled))
    }

    fn eval_along<Z: NonlinearRhs + ?Sized>(&self, z: &Z, traj: &Trajectory, eps: f64) -> Vec<PhaseVector> {
        exec::map_range(self.grid.len(), |j| z.eval(&traj.states[j], self.grid.node(j), eps))
    }

    /// Generating-amplitude map `F(c̄)`.
    pub fn amplitude_map<Z: NonlinearRhs + ?Sized>(&self, z: &Z, cbar: &PhaseVector) -> Result<PhaseVector> {
        let phi0 = self.solution(cbar)?;
        Ok(self.project_integral(&self.eval_along(z, &phi0, 0.0)))
    }

    /// `F` in resonant coordinates.
    pub fn amplitude_map_restricted<Z: NonlinearRhs + ?Sized>(&self, z: &Z, r: &DVector<f64>) -> DVector<f64> {
        let cbar = self.subspace.embed(r);
        let f = self.amplitude_map(z, &cbar).expect("embedded vector has matching modes");
        self.subspace.restrict(&f)
    }

    /// `U₀(w) ∫₀ʷ U(−τ) A₁(τ) U(τ) dτ U₀(w)` in resonant coordinates, with
    /// `A₁` from the analytic derivative of `Z`; `None` if `Z` supplies none.
    pub fn analytic_b0<Z: NonlinearRhs + ?Sized>(&self, z: &Z, c0: &PhaseVector) -> Result<Option<DMatrix<f64>>> {
        let phi0 = self.solution(c0)?;
        let dim = self.subspace.dim();
        let weights = simpson_scalar_weights(&self.grid);
        let op = &self.problem.op;
        let parts = exec::map_range(self.grid.len(), |j| {
            let t = self.grid.node(j);
            let a1 = z.jacobian(&phi0.states[j], t, 0.0)?;
            let sub = self.subspace.restrict_matrix(&a1);
            let rot = |s: f64| {
                let mut m = DMatrix::zeros(dim, dim);
                for (i, &k) in self.subspace.modes.iter().enumerate() {
                    m.fixed_view_mut::<2, 2>(2 * i, 2 * i)
                        .copy_from(&crate::spectral::rotation(op.frequency(k) * s));
                }
                m
            };
            Some(rot(-t) * sub * rot(t) * weights[j])
        });
        let mut acc = DMatrix::zeros(dim, dim);
        for p in parts {
            match p {
                Some(m) => acc += m,
                None => return Ok(None),
            }
        }
        Ok(Some(acc))
    }
}

/// `F(c̄) = U₀(w) ∫₀ʷ U(−τ) Z(φ₀(τ, c̄), τ, 0) dτ`.
pub fn generating_f<Z: NonlinearRhs + ?Sized>(
    problem: &BvpProblem,
    z: &Z,
    cbar: &PhaseVector,
    settings: &LinearSettings,
) -> Result<PhaseVector> {
    GeneratingFamily::new(problem.clone(), *settings)?.amplitude_map(z, cbar)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct B0Matrix {
    #[serde(serialize_with = "serialize_matrix")]
    pub finite_difference: DMatrix<f64>,
    #[serde(serialize_with = "serialize_opt_matrix")]
    pub analytic: Option<DMatrix<f64>>,
    pub discrepancy: Option<f64>,
}

impl B0Matrix {
    /// The analytic form when available.
    pub fn matrix(&self) -> &DMatrix<f64> {
        self.analytic.as_ref().unwrap_or(&self.finite_difference)
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&matrix_rows(m), s)
}

fn serialize_opt_matrix<S: serde::Serializer>(
    m: &Option<DMatrix<f64>>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&m.as_ref().map(matrix_rows), s)
}

/// `B₀ = F'(c⁰)` on `range U₀(w)` by central differences with step `h`,
/// cross-checked against the analytic form when `Z` supplies a derivative.
pub fn b0_matrix<Z: NonlinearRhs + ?Sized>(
    family: &GeneratingFamily,
    z: &Z,
    c0: &PhaseVector,
    h: f64,
    cross_check_tol: f64,
) -> Result<B0Matrix> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let r0 = family.subspace.restrict(c0);
    let f = |r: &DVector<f64>| family.amplitude_map_restricted(z, r);
    let finite_difference = if r0.is_empty() {
        DMatrix::zeros(0, 0)
    } else {
        newton::fd_jacobian(&f, &r0, h)
    };
    let analytic = family.analytic_b0(z, c0)?;
    let discrepancy = analytic
        .as_ref()
        .map(|a| (a - &finite_difference).abs().max());
    if let Some(d) = discrepancy {
        if d > cross_check_tol {
            return Err(Error::JacobianMismatch { discrepancy: d, tol: cross_check_tol });
        }
    }
    Ok(B0Matrix { finite_difference, analytic, discrepancy })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficientConditionReport {
    pub dim: usize,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// `σ_max/σ_min` over retained singular values; infinite for `B₀ = 0`.
    pub condition_number: f64,
    /// Always true in finite dimensions.
    pub pseudoinvertible: bool,
    pub adjoint_kernel_dim: usize,
    /// `‖P_{N(B₀*)} U(w)|_{range U₀}‖`.
    pub condition2_monodromy: f64,
    /// `‖P_{N(B₀*)} U₀(w)‖`.
    pub condition2_projector: f64,
    pub hypotheses_satisfied: bool,
    pub warnings: Vec<String>,
}

/// Diagnostic for the sufficient conditions: pseudoinvertibility of `B₀` and
/// `P_{N(B₀*)}·U(w) = 0`, the latter also evaluated with `U₀(w)` in place of
/// `U(w)`.
pub fn check_sufficient_conditions(
    b0: &DMatrix<f64>,
    projector: &BlockDiagonalMap,
    monodromy: &BlockDiagonalMap,
    rank_tol: f64,
    condition_tol: f64,
) -> Result<SufficientConditionReport> {
    let subspace = ResonantSubspace::from_projector(projector);
    let dim = subspace.dim();
    if b0.nrows() != dim || b0.ncols() != dim {
        return Err(Error::Shape { expected: dim, found: b0.nrows() });
    }
    let singular_values: Vec<f64> = if dim == 0 {
        Vec::new()
    } else {
        b0.singular_values().iter().copied().collect()
    };
    let smax = singular_values.iter().copied().fold(0.0, f64::max);
    let kept: Vec<f64> = singular_values
        .iter()
        .copied()
        .filter(|&s| s > rank_tol * smax && s > 0.0)
        .collect();
    let rank = kept.len();
    let condition_number = if rank == 0 {
        f64::INFINITY
    } else {
        smax / kept.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let kernel_projector = DMatrix::identity(dim, dim) - b0 * newton::pseudo_inverse(b0, rank_tol);
    let u_res = subspace.restrict_matrix(&monodromy.to_dense());
    let p_res = subspace.restrict_matrix(&projector.to_dense());
    let norm = |m: DMatrix<f64>| if dim == 0 { 0.0 } else { m.singular_values().max() };
    let condition2_monodromy = norm(&kernel_projector * u_res);
    let condition2_projector = norm(&kernel_projector * p_res);
    let pass_u = condition2_monodromy <= condition_tol;
    let pass_p = condition2_projector <= condition_tol;
    let mut warnings = Vec::new();
    if !pass_u {
        warnings.push(
            "sufficient-condition hypotheses not satisfied (P_N(B0*) U(w) != 0); iteration attempted anyway"
                .to_string(),
        );
    }
    if pass_u != pass_p {
        warnings.push(format!(
            "condition P_N(B0*) U(w) = 0 {} but the U0(w) variant {}",
            if pass_u { "holds" } else { "fails" },
            if pass_p { "holds" } else { "fails" }
        ));
    }
    Ok(SufficientConditionReport {
        dim,
        rank,
        singular_values,
        condition_number,
        pseudoinvertible: true,
        adjoint_kernel_dim: dim - rank,
        condition2_monodromy,
        condition2_projector,
        hypotheses_satisfied: pass_u,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSettings {
    pub newton: NewtonSettings,
    /// Finite-difference step for `B₀`.
    pub b0_step: f64,
    /// Allowed analytic vs finite-difference discrepancy of `B₀`.
    pub b0_cross_check_tol: f64,
    pub condition_tol: f64,
}

impl Default for RootSettings {
    fn default() -> Self {
        Self {
            newton: NewtonSettings::default(),
            b0_step: 1e-5,
            b0_cross_check_tol: 1e-6,
            condition_tol: 1e-8,
        }
    }
}

/// Root `c⁰` of the generating-amplitude equation with its `B₀` diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratingRoot {
    pub c0: PhaseVector,
    pub f_residual: f64,
    pub b0: B0Matrix,
    pub b0_rank: usize,
    pub condition2_norm: f64,
    pub conditions: SufficientConditionReport,
    pub newton_iterations: usize,
}

/// Diagnostics at a given `c⁰` without root finding. `F(c⁰)` need not vanish.
pub fn root_at<Z: NonlinearRhs + ?Sized>(
    family: &GeneratingFamily,
    z: &Z,
    c0: &PhaseVector,
    settings: &RootSettings,
) -> Result<GeneratingRoot> {
    let c0 = family.projector.apply(c0)?;
    let f_residual = family.amplitude_map(z, &c0)?.norm();
    let b0 = b0_matrix(family, z, &c0, settings.b0_step, settings.b0_cross_check_tol)?;
    let monodromy = family.op().monodromy(family.problem.w)?;
    let conditions = check_sufficient_conditions(
        b0.matrix(),
        &family.projector,
        &monodromy,
        settings.newton.rank_tol,
        settings.condition_tol,
    )?;
    Ok(GeneratingRoot {
        c0,
        f_residual,
        b0_rank: conditions.rank,
        condition2_norm: conditions.condition2_monodromy,
        b0,
        conditions,
        newton_iterations: 0,
    })
}

/// Solves `F(c̄) = 0` by pseudoinverse Newton from `c_init`. When `free_modes`
/// is given only those resonant modes move; the rest stay at `c_init`.
pub fn find_generating_root<Z: NonlinearRhs + ?Sized>(
    family: &GeneratingFamily,
    z: &Z,
    c_init: &PhaseVector,
    free_modes: Option<&[usize]>,
    settings: &RootSettings,
) -> Result<GeneratingRoot> {
    let base = family.subspace.restrict(&family.projector.apply(c_init)?);
    let free: Vec<usize> = match free_modes {
        None => (0..base.len()).collect(),
        Some(modes) => {
            let mut idx = Vec::new();
            for &k in modes {
                let pos = family
                    .subspace
                    .modes
                    .iter()
                    .position(|&m| m == k)
                    .ok_or_else(|| Error::Config(format!("mode {} is not resonant", k + 1)))?;
                idx.extend([2 * pos, 2 * pos + 1]);
            }
            idx
        }
    };
    let expand = |u: &DVector<f64>| {
        let mut r = base.clone();
        for (i, &c) in free.iter().enumerate() {
            r[c] = u[i];
        }
        r
    };
    let start = DVector::from_iterator(free.len(), free.iter().map(|&c| base[c]));
    let f = |u: &DVector<f64>| family.amplitude_map_restricted(z, &expand(u));
    let out = newton::newton_roots(f, &start, &settings.newton)?;
    let c0 = family.subspace.embed(&expand(&out.x));
    let mut root = root_at(family, z, &c0, settings)?;
    root.newton_iterations = out.iterations;
    Ok(root)
}

/// `R(v, t, ε) = Z(φ₀ + v, t, ε) − Z(φ₀, t, 0) − A₁(t) v` at every node.
pub fn remainder<Z: NonlinearRhs + ?Sized>(
    z: &Z,
    phi0: &Trajectory,
    a1: &[DMatrix<f64>],
    v: &Trajectory,
    eps: f64,
) -> Trajectory {
    let grid = phi0.grid;
    let states = exec::map_range(grid.len(), |j| {
        let t = grid.node(j);
        remainder_at(z, &phi0.states[j], &z.eval(&phi0.states[j], t, 0.0), &a1[j], &v.states[j], t, eps)
    });
    Trajectory { grid, states }
}

fn remainder_at<Z: NonlinearRhs + ?Sized>(
    z: &Z,
    phi0: &PhaseVector,
    z0: &PhaseVector,
    a1: &DMatrix<f64>,
    v: &PhaseVector,
    t: f64,
    eps: f64,
) -> PhaseVector {
    let full = z.eval(&(phi0 + v), t, eps);
    let lin = PhaseVector::from_dvector(&(a1 * v.to_dvector())).expect("square A1");
    &(&full - z0) - &lin
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationSettings {
    pub eps: f64,
    /// Stop when `max_j ‖v_{k+1}(t_j) − v_k(t_j)‖_∞ ≤ tol` ...
    pub tol: f64,
    /// ... and the part of `U₀∫U⁻¹Z` in `range B₀` is below this.
    pub obstruction_tol: f64,
    pub max_iter: usize,
    /// Largest admissible `|ε|`.
    pub eps_max: f64,
    /// Radius of the neighbourhood `‖v‖ ≤ q` that is monitored.
    pub q: f64,
    /// Consecutive increment growths treated as divergence.
    pub divergence_window: usize,
    /// Use the boundary gap `α` in the correction solve instead of the
    /// homogeneous condition.
    pub literal_boundary_data: bool,
    pub rank_tol: f64,
}

impl Default for IterationSettings {
    fn default() -> Self {
        Self {
            eps: 0.01,
            tol: 1e-10,
            obstruction_tol: 1e-8,
            max_iter: 200,
            eps_max: 0.1,
            q: 1.0,
            divergence_window: 5,
            literal_boundary_data: false,
            rank_tol: newton::DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationState {
    pub k: usize,
    /// `c_k`, in `range U₀(w)`.
    pub c: PhaseVector,
    /// `v_{k+1}`.
    pub correction: Trajectory,
    /// `‖φ_{k+1}(0) − φ_{k+1}(w) − α‖`.
    pub boundary_residual: f64,
    pub increment_norm: f64,
    /// `‖P_{range B₀} U₀∫U⁻¹Z(φ_{k+1})‖`, removed by the `c` update at a root.
    pub absorbed_obstruction: f64,
    /// Remaining component in `N(B₀*)`.
    pub unabsorbed_obstruction: f64,
    pub correction_norm: f64,
    pub exceeds_q: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRun {
    pub solution: Trajectory,
    pub generating: Trajectory,
    pub history: Vec<IterationState>,
    pub root_residual: f64,
    /// Central-difference residual of `φ' = Aφ + εZ(φ, t, ε) + f`.
    pub ode_residual: f64,
    pub boundary_residual: f64,
    pub warnings: Vec<String>,
}

impl IterationRun {
    /// `φ_k = φ₀ + v_k`.
    pub fn iterate(&self, k: usize) -> Trajectory {
        self.generating.add(&self.history[k].correction)
    }
}

#[derive(Debug, Clone)]
pub struct IterationFailure {
    pub reason: String,
    pub history: Vec<IterationState>,
    pub generating: Trajectory,
}

/// Runs the correction iteration from the root `c⁰`. Each Green solve removes
/// the resonant part of its data first, so every `v̄_{k+1}` satisfies the
/// homogeneous boundary relation and every `φ_k` meets the boundary condition.
pub fn ls_iterate<Z: NonlinearRhs + ?Sized>(
    family: &GeneratingFamily,
    z: &Z,
    root: &GeneratingRoot,
    settings: &IterationSettings,
) -> Result<IterationRun> {
    let eps = settings.eps;
    if settings.max_iter == 0 {
        return Err(Error::Config("iteration needs max_iter >= 1".into()));
    }
    if !(eps.is_finite() && eps.abs() <= settings.eps_max) {
        return Err(Error::Config(format!(
            "|eps| = {} exceeds the admissible bound {}",
            eps.abs(),
            settings.eps_max
        )));
    }
    let problem = family.problem();
    let op = family.op();
    let grid = family.grid();
    let n = problem.n_modes();
    let sub = family.subspace();
    let phi0 = family.solution(&root.c0)?;
    let root_residual = root.f_residual;
    let mut warnings = root.conditions.warnings.clone();
    if root_residual > settings.obstruction_tol {
        warnings.push(format!(
            "c0 does not solve the generating-amplitude equation (|F(c0)| = {root_residual:e})"
        ));
    }
    let forcing = problem.forcing.sample(&grid, n)?;
    let check = |traj: &Trajectory, z_samples: &[PhaseVector]| {
        let rhs: Vec<PhaseVector> = z_samples
            .iter()
            .zip(&forcing)
            .map(|(zz, f)| &zz.scale(eps) + f)
            .collect();
        (
            linear::ode_residual(op, traj, &rhs),
            (&(traj.first() - traj.last()) - &problem.alpha).norm(),
        )
    };

    let z0: Vec<PhaseVector> = exec::map_range(grid.len(), |j| z.eval(&phi0.states[j], grid.node(j), 0.0));
    if eps == 0.0 {
        let (ode_residual, boundary_residual) = check(&phi0, &z0);
        let state = IterationState {
            k: 0,
            c: PhaseVector::zeros(n),
            correction: Trajectory::zeros(grid, n),
            boundary_residual,
            increment_norm: 0.0,
            absorbed_obstruction: 0.0,
            unabsorbed_obstruction: 0.0,
            correction_norm: 0.0,
            exceeds_q: false,
        };
        return Ok(IterationRun {
            solution: phi0.clone(),
            generating: phi0,
            history: vec![state],
            root_residual,
            ode_residual,
            boundary_residual,
            warnings,
        });
    }

    let a1: Vec<DMatrix<f64>> =
        exec::map_range(grid.len(), |j| rhs_jacobian(z, &phi0.states[j], grid.node(j), 0.0));
    let b0 = root.b0.matrix();
    let b0_pinv = newton::pseudo_inverse(b0, settings.rank_tol);
    let range_projector = b0 * &b0_pinv;
    let gap = if settings.literal_boundary_data {
        problem.alpha.clone()
    } else {
        PhaseVector::zeros(n)
    };

    let mut v = Trajectory::zeros(grid, n);
    let mut vbar = Trajectory::zeros(grid, n);
    let mut z_full = exec::map_range(grid.len(), |j| z.eval(&phi0.states[j], grid.node(j), eps));
    let mut history: Vec<IterationState> = Vec::new();
    let mut growth = 0usize;

    for k in 0..settings.max_iter {
        // c_k from v̄_k and R(v_k)
        let inner = exec::map_range(grid.len(), |j| {
            let lin = PhaseVector::from_dvector(&(&a1[j] * vbar.states[j].to_dvector())).expect("square A1");
            let full = &z_full[j];
            let lin_v = PhaseVector::from_dvector(&(&a1[j] * v.states[j].to_dvector())).expect("square A1");
            let rem = &(full - &z0[j]) - &lin_v;
            &lin + &rem
        });
        let b = sub.restrict(&family.project_integral(&inner));
        let c = sub.embed(&(-(&b0_pinv * b)));

        let samples: Vec<PhaseVector> = z_full.iter().map(|s| s.scale(eps)).collect();
        let (vbar_next, _) =
            linear::green_trajectory(op, grid, &samples, &gap, true, family.settings().resonance_tol)?;
        let states = exec::map_range(grid.len(), |j| {
            &op.evolve_unchecked(grid.node(j), &c) + &vbar_next.states[j]
        });
        let v_next = Trajectory { grid, states };

        let increment_norm = v_next.max_abs_diff(&v);
        let phi_next = phi0.add(&v_next);
        z_full = exec::map_range(grid.len(), |j| z.eval(&phi_next.states[j], grid.node(j), eps));
        let obstruction = sub.restrict(&family.project_integral(&z_full));
        let absorbed = &range_projector * &obstruction;
        let absorbed_obstruction = if absorbed.is_empty() { 0.0 } else { absorbed.norm() };
        let unabsorbed_obstruction = if obstruction.is_empty() {
            0.0
        } else {
            (&obstruction - &absorbed).norm()
        };
        let correction_norm = v_next.max_abs();
        let state = IterationState {
            k,
            c,
            boundary_residual: (&(phi_next.first() - phi_next.last()) - &problem.alpha).norm(),
            increment_norm,
            absorbed_obstruction,
            unabsorbed_obstruction,
            correction_norm,
            exceeds_q: correction_norm > settings.q,
            correction: v_next.clone(),
        };
        if let Some(prev) = history.last() {
            growth = if increment_norm > prev.increment_norm { growth + 1 } else { 0 };
        }
        history.push(state);
        if !increment_norm.is_finite() || growth >= settings.divergence_window {
            return Err(Error::IterationNonConvergence(Box::new(IterationFailure {
                reason: format!("increments grew for {growth} consecutive steps (last {increment_norm:e})"),
                history,
                generating: phi0,
            })));
        }
        v = v_next;
        vbar = vbar_next;
        if increment_norm <= settings.tol && absorbed_obstruction <= settings.obstruction_tol {
            if history.iter().any(|s| s.exceeds_q) {
                warnings.push(format!("correction left the neighbourhood |v| <= q = {}", settings.q));
            }
            if unabsorbed_obstruction > settings.obstruction_tol {
                warnings.push(format!(
                    "obstruction component in N(B0*) not absorbed: {unabsorbed_obstruction:e}"
                ));
            }
            let (ode_residual, boundary_residual) = check(&phi_next, &z_full);
            return Ok(IterationRun {
                solution: phi_next,
                generating: phi0,
                history,
                root_residual,
                ode_residual,
                boundary_residual,
                warnings,
            });
        }
    }
    let last = history.last().expect("max_iter ≥ 1");
    let reason = format!(
        "no convergence within {} iterations (increment {:e}, obstruction in range(B0) {:e})",
        settings.max_iter, last.increment_norm, last.absorbed_obstruction
    );
    Err(Error::IterationNonConvergence(Box::new(IterationFailure {
        reason,
        history,
        generating: phi0,
    })))
}
