//! Galerkin truncation of the abstract van der Pol equation
//!
//! ```text
//! y'' + T y = ε (1 − ‖y‖²) y',   y(0) = y(w), y'(0) = y'(w),
//! ```
//!
//! on the critical spectrum `λ_k = 4π²k²/w²`. With `x_k = c_k`,
//! `y_k = c_k'/√λ_k` the system reads
//!
//! ```text
//! x_k' = √λ_k y_k,
//! y_k' = −√λ_k x_k + ε √λ_k (1 − Σ_j x_j²) y_k,
//! ```
//!
//! and every mode is resonant. Nonzero roots of the amplitude equations have
//! all nonzero pairs on a common circle of radius `2/√(2N − 1)`, `N` being the
//! number of nonzero pairs.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::forcing::ForcingFunction;
use crate::linear::{BvpProblem, LinearSettings, Trajectory};
use crate::lyapunov_schmidt::{GeneratingFamily, NonlinearRhs};
use crate::newton::{self, NewtonSettings};
use crate::quadrature::TimeGrid;
use crate::spectral::{PhaseVector, SpectralOperator};

#[derive(Debug, Clone, PartialEq)]
pub struct VdpConfig {
    pub n_modes: usize,
    pub w: f64,
    pub eps: f64,
    /// One-based mode indices allowed nonzero amplitudes.
    pub support: Vec<usize>,
}

impl VdpConfig {
    pub fn new(n_modes: usize, support: Vec<usize>) -> Self {
        Self { n_modes, w: TAU, eps: 0.0, support }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(Error::Config("van der Pol system needs at least one mode".into()));
        }
        crate::spectral::check_period(self.w)?;
        for &k in &self.support {
            if k == 0 || k > self.n_modes {
                return Err(Error::Config(format!(
                    "support index {k} outside 1..={}",
                    self.n_modes
                )));
            }
        }
        Ok(())
    }

    /// Zero-based support, sorted and deduplicated.
    pub fn support_indices(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.support.iter().map(|k| k - 1).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// `Z_k = (0, √λ_k (1 − Σ_j x_j²) y_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VanDerPolRhs {
    frequencies: Vec<f64>,
}

impl VanDerPolRhs {
    pub fn new(op: &SpectralOperator) -> Self {
        Self {
            frequencies: (0..op.n_modes()).map(|k| op.frequency(k)).collect(),
        }
    }
}

impl NonlinearRhs for VanDerPolRhs {
    fn eval(&self, phi: &PhaseVector, _t: f64, _eps: f64) -> PhaseVector {
        let damping = 1.0 - phi.pairs().iter().map(|p| p.x * p.x).sum::<f64>();
        PhaseVector::from_pairs(
            phi.pairs()
                .iter()
                .zip(&self.frequencies)
                .map(|(p, s)| Vector2::new(0.0, s * damping * p.y))
                .collect(),
        )
    }

    fn jacobian(&self, phi: &PhaseVector, _t: f64, _eps: f64) -> Option<DMatrix<f64>> {
        let n = phi.n_modes();
        let damping = 1.0 - phi.pairs().iter().map(|p| p.x * p.x).sum::<f64>();
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for (k, (p, s)) in phi.pairs().iter().zip(&self.frequencies).enumerate() {
            let row = 2 * k + 1;
            for (j, q) in phi.pairs().iter().enumerate() {
                jac[(row, 2 * j)] = -2.0 * s * q.x * p.y;
            }
            jac[(row, row)] = s * damping;
        }
        Some(jac)
    }
}

/// Critical-spectrum operator, `α = 0`, `f ≡ 0`, and the van der Pol term.
pub fn build_vdp_problem(cfg: &VdpConfig) -> Result<(BvpProblem, VanDerPolRhs)> {
    cfg.validate()?;
    let op = SpectralOperator::critical(cfg.n_modes, cfg.w)?;
    let z = VanDerPolRhs::new(&op);
    let problem = BvpProblem::new(op, cfg.w, PhaseVector::zeros(cfg.n_modes), ForcingFunction::Zero)?;
    Ok((problem, z))
}

/// Amplitude pairs `(c₁ᵏ, c₂ᵏ)`, `k = 1..N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplitudePairs {
    pub pairs: PhaseVector,
}

impl AmplitudePairs {
    pub fn new(pairs: PhaseVector) -> Self {
        Self { pairs }
    }

    pub fn from_arrays(pairs: &[[f64; 2]]) -> Self {
        Self { pairs: PhaseVector::from_arrays(pairs) }
    }

    pub fn n_modes(&self) -> usize {
        self.pairs.n_modes()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.pairs.pairs().iter().map(|p| p.norm()).collect()
    }
}

/// Generating solution `x_k = cos(ω_k t)c₁ᵏ + sin(ω_k t)c₂ᵏ`,
/// `y_k = −sin(ω_k t)c₁ᵏ + cos(ω_k t)c₂ᵏ`, `ω_k = 2πk/w`, by direct evaluation.
pub fn generating_solution(pairs: &AmplitudePairs, w: f64, grid_size: usize) -> Result<Trajectory> {
    let grid = TimeGrid::new(w, grid_size)?;
    let states = exec::map_range(grid.len(), |j| {
        let t = grid.node(j);
        PhaseVector::from_pairs(
            pairs
                .pairs
                .pairs()
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let (s, co) = (TAU * (k + 1) as f64 / w * t).sin_cos();
                    Vector2::new(co * c.x + s * c.y, -s * c.x + co * c.y)
                })
                .collect(),
        )
    });
    Ok(Trajectory { grid, states })
}

/// Residuals of the algebraic amplitude equations, interleaved per mode:
///
/// ```text
/// (c₁ᵏ)³ + 2Σ_{j≠k}(c₁ᵏ(c₁ʲ)² + c₁ᵏ(c₂ʲ)²) + c₁ᵏ(c₂ᵏ)² − 4c₁ᵏ,
/// (c₂ᵏ)³ + 2Σ_{j≠k}(c₂ᵏ(c₁ʲ)² + c₂ᵏ(c₂ʲ)²) + (c₁ᵏ)²c₂ᵏ − 4c₂ᵏ.
/// ```
pub fn amplitude_system(pairs: &AmplitudePairs) -> Vec<f64> {
    let p = pairs.pairs.pairs();
    let mut out = Vec::with_capacity(2 * p.len());
    for (k, ck) in p.iter().enumerate() {
        let (a, b) = (ck.x, ck.y);
        let mut cross_a = 0.0;
        let mut cross_b = 0.0;
        for (j, cj) in p.iter().enumerate() {
            if j != k {
                cross_a += a * cj.x * cj.x + a * cj.y * cj.y;
                cross_b += b * cj.x * cj.x + b * cj.y * cj.y;
            }
        }
        out.push(a * a * a + 2.0 * cross_a + a * b * b - 4.0 * a);
        out.push(b * b * b + 2.0 * cross_b + a * a * b - 4.0 * b);
    }
    out
}

/// `2/√(2N − 1)`.
pub fn torus_radius(n: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::Domain("torus radius needs a support of size ≥ 1".into()));
    }
    Ok(2.0 / ((2 * n - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusReport {
    /// One-based indices of the nonzero pairs.
    pub support: Vec<usize>,
    pub radii: Vec<f64>,
    pub shared_radius: Option<f64>,
    pub expected_radius: Option<f64>,
    pub radius_spread: f64,
    pub system_residual: f64,
    /// `max_k |r_k² + 2Σ_{j∈S, j≠k} r_j² − 4|` over the support.
    pub root_law_residual: f64,
    pub matches_formula: bool,
}

/// Checks that the nonzero pairs of a root share the predicted radius.
pub fn verify_torus(root: &AmplitudePairs, tol: f64) -> TorusReport {
    let radii = root.radii();
    let system_residual = DVector::from_vec(amplitude_system(root)).norm();
    let support: Vec<usize> = radii
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > tol)
        .map(|(k, _)| k)
        .collect();
    let on: Vec<f64> = support.iter().map(|&k| radii[k]).collect();
    let (shared_radius, expected_radius, radius_spread) = if on.is_empty() {
        (None, None, 0.0)
    } else {
        let mean = on.iter().sum::<f64>() / on.len() as f64;
        let spread = on.iter().map(|r| (r - mean).abs()).fold(0.0, f64::max);
        (Some(mean), torus_radius(on.len()).ok(), spread)
    };
    let total: f64 = on.iter().map(|r| r * r).sum();
    let root_law_residual = on
        .iter()
        .map(|r| (r * r + 2.0 * (total - r * r) - 4.0).abs())
        .fold(0.0, f64::max);
    let matches_formula = system_residual <= tol
        && radius_spread <= tol
        && match (shared_radius, expected_radius) {
            (Some(s), Some(e)) => (s - e).abs() <= tol,
            _ => true,
        };
    TorusReport {
        support: support.iter().map(|k| k + 1).collect(),
        radii,
        shared_radius,
        expected_radius,
        radius_spread,
        system_residual,
        root_law_residual,
        matches_formula,
    }
}

/// Deterministic start (radius 1, phase 0 on the support) followed by
/// `random_starts` seeded starts with radius 1 and uniform random phases.
pub fn torus_starts(cfg: &VdpConfig, random_starts: usize, seed: u64) -> Vec<AmplitudePairs> {
    let support = cfg.support_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = Vec::with_capacity(random_starts + 1);
    for i in 0..=random_starts {
        let mut p = PhaseVector::zeros(cfg.n_modes);
        for &k in &support {
            let phase: f64 = if i == 0 { 0.0 } else { rng.gen_range(0.0..TAU) };
            p.pairs_mut()[k] = Vector2::new(phase.cos(), phase.sin());
        }
        starts.push(AmplitudePairs::new(p));
    }
    starts
}

/// Newton on the algebraic amplitude system with modes outside the support
/// pinned to zero.
pub fn solve_amplitude_system(
    cfg: &VdpConfig,
    start: &AmplitudePairs,
    settings: &NewtonSettings,
) -> Result<AmplitudePairs> {
    cfg.validate()?;
    start.pairs.check_modes(cfg.n_modes)?;
    let support = cfg.support_indices();
    let n = cfg.n_modes;
    let expand = |u: &DVector<f64>| {
        let mut p = PhaseVector::zeros(n);
        for (i, &k) in support.iter().enumerate() {
            p.pairs_mut()[k] = Vector2::new(u[2 * i], u[2 * i + 1]);
        }
        AmplitudePairs::new(p)
    };
    let u0 = DVector::from_iterator(
        2 * support.len(),
        support.iter().flat_map(|&k| {
            let c = start.pairs.pair(k);
            [c.x, c.y]
        }),
    );
    let f = |u: &DVector<f64>| DVector::from_vec(amplitude_system(&expand(u)));
    let out = newton::newton_roots(f, &u0, settings)?;
    Ok(expand(&out.x))
}

/// Roots from every start of [`torus_starts`], solved in parallel.
pub fn torus_roots(
    cfg: &VdpConfig,
    random_starts: usize,
    seed: u64,
    settings: &NewtonSettings,
) -> Vec<Result<AmplitudePairs>> {
    let starts = torus_starts(cfg, random_starts, seed);
    exec::map_slice(&starts, |s| solve_amplitude_system(cfg, s, settings))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeRatio {
    /// One-based mode index.
    pub mode: usize,
    pub mean: f64,
    pub relative_std: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheckReport {
    pub modes: Vec<ModeRatio>,
    /// `sign F = sign(κ_k)·sign(algebraic)` wherever both are nonnegligible.
    pub sign_agreement: bool,
    /// Sample points at which both `F` and the algebraic system vanish.
    pub vanishing_points: usize,
    pub consistent: bool,
}

/// Compares the quadrature map `F` with the algebraic amplitude system at the
/// given points: per mode, `F_k = κ_k · algebraic_k` for one constant `κ_k`.
pub fn cross_check_f(
    cfg: &VdpConfig,
    samples: &[AmplitudePairs],
    grid_size: usize,
    rel_tol: f64,
) -> Result<CrossCheckReport> {
    if (cfg.w - TAU).abs() > 1e-12 {
        return Err(Error::Config("algebraic amplitude system assumes w = 2π".into()));
    }
    let (problem, z) = build_vdp_problem(cfg)?;
    let family = GeneratingFamily::new(
        problem,
        LinearSettings { grid_size, ..Default::default() },
    )?;
    let evaluated = exec::map_slice(samples, |s| -> Result<(Vec<f64>, Vec<f64>)> {
        let f = family.amplitude_map(&z, &s.pairs)?;
        Ok((f.to_dvector().as_slice().to_vec(), amplitude_system(s)))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let n = cfg.n_modes;
    let mut ratios: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut vanishing_points = 0;
    for (f, alg) in &evaluated {
        let scale = alg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let fscale = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale < 1e-10 && fscale < 1e-10 {
            vanishing_points += 1;
            continue;
        }
        for (i, (fv, av)) in f.iter().zip(alg).enumerate() {
            if av.abs() > 1e-6 * scale.max(1.0) {
                ratios[i / 2].push(fv / av);
            }
        }
    }
    let modes: Vec<ModeRatio> = ratios
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let m = r.len().max(1) as f64;
            let mean = r.iter().sum::<f64>() / m;
            let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
            ModeRatio {
                mode: k + 1,
                mean,
                relative_std: if mean == 0.0 { 0.0 } else { var.sqrt() / mean.abs() },
                samples: r.len(),
            }
        })
        .collect();
    let mut sign_agreement = true;
    for (f, alg) in &evaluated {
        for (i, (fv, av)) in f.iter().zip(alg).enumerate() {
            let kappa = modes[i / 2].mean;
            if av.abs() > 1e-8 && fv.abs() > 1e-8 && kappa != 0.0 {
                sign_agreement &= fv.signum() == kappa.signum() * av.signum();
            }
        }
    }
    let consistent = modes.iter().all(|m| m.relative_std <= rel_tol) && sign_agreement;
    Ok(CrossCheckReport { modes, sign_agreement, vanishing_points, consistent })
}

/// Seeded uniform sample points in `[-range, range]²` per mode.
pub fn sample_points(n_modes: usize, count: usize, range: f64, seed: u64) -> Vec<AmplitudePairs> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            AmplitudePairs::new(PhaseVector::from_pairs(
                (0..n_modes)
                    .map(|_| Vector2::new(rng.gen_range(-range..range), rng.gen_range(-range..range)))
                    .collect(),
            ))
        })
        .collect()
}

/// `−kπ/4`: the per-mode constant relating `F` to the algebraic system at
/// `w = 2π`, obtained by integrating the trigonometric cubics by hand.
pub fn reference_ratio(mode: usize) -> f64 {
    -(mode as f64) * PI / 4.0
}
