//! Truncated spectral representation of the positive operator `T`, the phase
//! space `H ⊕ H` restricted to `N` modes, the rotation group it generates and
//! the Cesàro-mean projector onto the fixed subspace of the period map.
//!
//! Mode `k` evolves by the plane rotation
//!
//! ```text
//! (x, y) ↦ ( cos θ·x + sin θ·y, −sin θ·x + cos θ·y ),   θ = √λ_k · t
//! ```
//!
//! so every linear map in this module is block diagonal with one real 2×2
//! block per mode.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;

pub type Pair = Vector2<f64>;
pub type Block = Matrix2<f64>;

/// Default tolerance on `dist(θ_k, 2πℤ)` below which a mode counts as resonant.
pub const DEFAULT_RESONANCE_TOL: f64 = 1e-9;

/// Distance from `theta` to the nearest multiple of 2π.
pub fn resonance_distance(theta: f64) -> f64 {
    (theta - TAU * (theta / TAU).round()).abs()
}

/// Plane rotation block `[[cos θ, sin θ], [−sin θ, cos θ]]`.
pub fn rotation(theta: f64) -> Block {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, -s, c)
}

/// Element of the truncated phase space: one `(x_k, y_k)` pair per mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector {
    pairs: Vec<Pair>,
}

impl PhaseVector {
    pub fn zeros(n_modes: usize) -> Self {
        Self {
            pairs: vec![Pair::zeros(); n_modes],
        }
    }

    pub fn from_pairs(pairs: Vec<Pair>) -> Self {
        Self { pairs }
    }

    pub fn from_arrays(pairs: &[[f64; 2]]) -> Self {
        Self {
            pairs: pairs.iter().map(|p| Pair::new(p[0], p[1])).collect(),
        }
    }

    /// Interleaved coordinates `x_1, y_1, x_2, y_2, ...`.
    pub fn from_dvector(v: &DVector<f64>) -> Result<Self> {
        if !v.len().is_multiple_of(2) {
            return Err(Error::Shape {
                expected: v.len() + 1,
                found: v.len(),
            });
        }
        Ok(Self {
            pairs: v
                .as_slice()
                .chunks_exact(2)
                .map(|c| Pair::new(c[0], c[1]))
                .collect(),
        })
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_iterator(
            2 * self.pairs.len(),
            self.pairs.iter().flat_map(|p| [p.x, p.y]),
        )
    }

    pub fn to_arrays(&self) -> Vec<[f64; 2]> {
        self.pairs.iter().map(|p| [p.x, p.y]).collect()
    }

    pub fn n_modes(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn pairs_mut(&mut self) -> &mut [Pair] {
        &mut self.pairs
    }

    pub fn pair(&self, k: usize) -> Pair {
        self.pairs[k]
    }

    /// Plain (unweighted) Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.pairs.iter().map(|p| p.norm_squared()).sum::<f64>().sqrt()
    }

    /// Largest absolute coordinate.
    pub fn max_abs(&self) -> f64 {
        self.pairs
            .iter()
            .map(|p| p.x.abs().max(p.y.abs()))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.pairs.iter().all(|p| p.x.is_finite() && p.y.is_finite())
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            pairs: self.pairs.iter().map(|p| p * a).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.pairs
            .iter()
            .zip(&other.pairs)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub(crate) fn check_modes(&self, n_modes: usize) -> Result<()> {
        if self.pairs.len() != n_modes {
            return Err(Error::Shape {
                expected: n_modes,
                found: self.pairs.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn add_assign_scaled(&mut self, other: &Self, a: f64) {
        for (p, q) in self.pairs.iter_mut().zip(&other.pairs) {
            *p += q * a;
        }
    }
}

impl Add for &PhaseVector {
    type Output = PhaseVector;
    fn add(self, rhs: Self) -> PhaseVector {
        debug_assert_eq!(self.n_modes(), rhs.n_modes());
        PhaseVector {
            pairs: self.pairs.iter().zip(&rhs.pairs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &PhaseVector {
    type Output = PhaseVector;
    fn sub(self, rhs: Self) -> PhaseVector {
        debug_assert_eq!(self.n_modes(), rhs.n_modes());
        PhaseVector {
            pairs: self.pairs.iter().zip(&rhs.pairs).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &PhaseVector {
    type Output = PhaseVector;
    fn neg(self) -> PhaseVector {
        self.scale(-1.0)
    }
}

impl Mul<&PhaseVector> for f64 {
    type Output = PhaseVector;
    fn mul(self, rhs: &PhaseVector) -> PhaseVector {
        rhs.scale(self)
    }
}

/// Linear map acting independently on each mode through a real 2×2 block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonalMap {
    blocks: Vec<Block>,
}

impl BlockDiagonalMap {
    pub fn from_blocks(blocks: Vec<Block>) -> Self {
        Self { blocks }
    }

    pub fn identity(n_modes: usize) -> Self {
        Self {
            blocks: vec![Block::identity(); n_modes],
        }
    }

    pub fn zeros(n_modes: usize) -> Self {
        Self {
            blocks: vec![Block::zeros(); n_modes],
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &Block {
        &self.blocks[k]
    }

    pub fn n_modes(&self) -> usize {
        self.blocks.len()
    }

    pub fn apply(&self, v: &PhaseVector) -> Result<PhaseVector> {
        v.check_modes(self.n_modes())?;
        Ok(self.apply_unchecked(v))
    }

    pub(crate) fn apply_unchecked(&self, v: &PhaseVector) -> PhaseVector {
        PhaseVector {
            pairs: self.blocks.iter().zip(&v.pairs).map(|(b, p)| b * p).collect(),
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.n_modes() != other.n_modes() {
            return Err(Error::Shape {
                expected: self.n_modes(),
                found: other.n_modes(),
            });
        }
        Ok(Self {
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a * b).collect(),
        })
    }

    pub fn transpose(&self) -> Self {
        Self {
            blocks: self.blocks.iter().map(|b| b.transpose()).collect(),
        }
    }

    /// Largest entrywise difference, over all blocks.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a - b).abs().max())
            .fold(0.0, f64::max)
    }

    /// Dense `2N × 2N` matrix in interleaved coordinates.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = 2 * self.n_modes();
        let mut m = DMatrix::zeros(n, n);
        for (k, b) in self.blocks.iter().enumerate() {
            m.fixed_view_mut::<2, 2>(2 * k, 2 * k).copy_from(b);
        }
        m
    }
}

/// Truncation of `T` to its first `N` eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralOperator {
    eigenvalues: Vec<f64>,
}

impl SpectralOperator {
    /// Eigenvalues must be finite, strictly positive and nondecreasing.
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Config("operator needs at least one mode".into()));
        }
        if let Some((k, l)) = eigenvalues
            .iter()
            .enumerate()
            .find(|(_, l)| !(l.is_finite() && **l > 0.0))
        {
            return Err(Error::Config(format!(
                "eigenvalue {l} of mode {} is not a finite positive number",
                k + 1
            )));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("eigenvalues must be nondecreasing".into()));
        }
        Ok(Self { eigenvalues })
    }

    /// `λ_k = 4π²k²/w²`, the spectrum for which every mode is resonant at period `w`.
    pub fn critical(n_modes: usize, w: f64) -> Result<Self> {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Config(format!("period must be positive, got {w}")));
        }
        Self::new(
            (1..=n_modes)
                .map(|k| (2.0 * PI * k as f64 / w).powi(2))
                .collect(),
        )
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Rotation frequency `√λ_k`.
    pub fn frequency(&self, k: usize) -> f64 {
        self.eigenvalues[k].sqrt()
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.n_modes() {
            return Err(Error::ModeIndex {
                index: k,
                n_modes: self.n_modes(),
            });
        }
        Ok(())
    }

    /// Rotation angle `√λ_k · t` of mode `k` (zero-based).
    pub fn mode_angle(&self, k: usize, t: f64) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.frequency(k) * t)
    }

    /// `U(t)` as a block-diagonal map.
    pub fn evolution(&self, t: f64) -> BlockDiagonalMap {
        BlockDiagonalMap {
            blocks: self
                .eigenvalues
                .iter()
                .map(|l| rotation(l.sqrt() * t))
                .collect(),
        }
    }

    /// `U(t)φ`.
    pub fn evolve(&self, t: f64, phi: &PhaseVector) -> Result<PhaseVector> {
        phi.check_modes(self.n_modes())?;
        Ok(self.evolve_unchecked(t, phi))
    }

    pub(crate) fn evolve_unchecked(&self, t: f64, phi: &PhaseVector) -> PhaseVector {
        PhaseVector {
            pairs: self
                .eigenvalues
                .iter()
                .zip(&phi.pairs)
                .map(|(l, p)| rotation(l.sqrt() * t) * p)
                .collect(),
        }
    }

    /// The period map `U(w)`.
    pub fn monodromy(&self, w: f64) -> Result<BlockDiagonalMap> {
        check_period(w)?;
        Ok(self.evolution(w))
    }

    /// Per-mode resonance flags: `dist(√λ_k·w, 2πℤ) ≤ tol`.
    pub fn resonant_modes(&self, w: f64, resonance_tol: f64) -> Vec<bool> {
        self.eigenvalues
            .iter()
            .map(|l| resonance_distance(l.sqrt() * w) <= resonance_tol)
            .collect()
    }

    /// Orthoprojector onto the fixed subspace of `U(w)`: identity blocks on
    /// resonant modes, zero blocks elsewhere.
    pub fn cesaro_projector_closed(&self, w: f64, resonance_tol: f64) -> BlockDiagonalMap {
        BlockDiagonalMap {
            blocks: self
                .resonant_modes(w, resonance_tol)
                .into_iter()
                .map(|r| if r { Block::identity() } else { Block::zeros() })
                .collect(),
        }
    }

    /// Finite Cesàro mean `(1/(n+1)) Σ_{j=0}^{n} U(jw)`, summed in closed form.
    pub fn cesaro_projector_empirical(&self, w: f64, n: usize) -> Result<BlockDiagonalMap> {
        if n == 0 {
            return Err(Error::Config("Cesàro mean needs n ≥ 1".into()));
        }
        let blocks = exec::map_slice(&self.eigenvalues, |l| {
            let (c, s) = rotation_power_sum(l.sqrt() * w, n);
            let m = (n + 1) as f64;
            Matrix2::new(c / m, s / m, -s / m, c / m)
        });
        Ok(BlockDiagonalMap { blocks })
    }

    /// Inner product of `H_T`: `Σ_k λ_k² (x_k x'_k + y_k y'_k)`.
    pub fn ht_inner(&self, a: &PhaseVector, b: &PhaseVector) -> Result<f64> {
        a.check_modes(self.n_modes())?;
        b.check_modes(self.n_modes())?;
        Ok(self
            .eigenvalues
            .iter()
            .zip(a.pairs.iter().zip(&b.pairs))
            .map(|(l, (p, q))| l * l * p.dot(q))
            .sum())
    }

    pub fn ht_norm(&self, a: &PhaseVector) -> Result<f64> {
        Ok(self.ht_inner(a, a)?.sqrt())
    }
}

pub(crate) fn check_period(w: f64) -> Result<()> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::Config(format!("period must be positive, got {w}")));
    }
    Ok(())
}

/// `(Σ_{j=0}^{n} cos jθ, Σ_{j=0}^{n} sin jθ)` via the Dirichlet-kernel identities.
fn rotation_power_sum(theta: f64, n: usize) -> (f64, f64) {
    // reduce first so that sin(θ/2) is accurate near multiples of 2π
    let r = theta - TAU * (theta / TAU).round();
    let half = 0.5 * r;
    let sh = half.sin();
    if sh == 0.0 {
        return ((n + 1) as f64, 0.0);
    }
    let nf = n as f64;
    let common = ((nf + 1.0) * half).sin() / sh;
    (common * (nf * half).cos(), common * (nf * half).sin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn op(l: &[f64]) -> SpectralOperator {
        SpectralOperator::new(l.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_spectra() {
        assert!(SpectralOperator::new(vec![]).is_err());
        assert!(SpectralOperator::new(vec![1.0, -2.0]).is_err());
        assert!(SpectralOperator::new(vec![0.0]).is_err());
        assert!(SpectralOperator::new(vec![f64::NAN]).is_err());
        assert!(SpectralOperator::new(vec![4.0, 1.0]).is_err());
    }

    #[test]
    fn mode_angles() {
        let o = op(&[1.0, 4.0]);
        assert_abs_diff_eq!(o.mode_angle(0, PI / 2.0).unwrap(), PI / 2.0);
        assert_abs_diff_eq!(o.mode_angle(1, TAU).unwrap(), 4.0 * PI);
        assert!(matches!(o.mode_angle(2, 1.0), Err(Error::ModeIndex { .. })));
        let crit = SpectralOperator::critical(6, TAU).unwrap();
        for k in 0..6 {
            let theta = crit.mode_angle(k, TAU).unwrap();
            assert_abs_diff_eq!(theta, TAU * (k + 1) as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn quarter_rotation() {
        let o = op(&[1.0]);
        let phi = PhaseVector::from_arrays(&[[1.0, 0.0]]);
        let out = o.evolve(PI / 2.0, &phi).unwrap();
        assert_abs_diff_eq!(out.pair(0).x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.pair(0).y, -1.0, epsilon = 1e-15);
        assert_eq!(o.evolve(0.0, &phi).unwrap(), phi);
        assert!(o.evolve(1.0, &PhaseVector::zeros(2)).is_err());
    }

    #[test]
    fn monodromy_blocks() {
        let crit = SpectralOperator::critical(5, TAU).unwrap();
        let u = crit.monodromy(TAU).unwrap();
        assert!(u.max_abs_diff(&BlockDiagonalMap::identity(5)) < 1e-12);
        let half = op(&[0.25]).monodromy(TAU).unwrap();
        assert!((half.block(0) + Block::identity()).abs().max() < 1e-15);
        assert!(crit.monodromy(0.0).is_err());
    }

    #[test]
    fn closed_projector_cases() {
        let crit = SpectralOperator::critical(4, TAU).unwrap();
        assert_eq!(
            crit.cesaro_projector_closed(TAU, DEFAULT_RESONANCE_TOL),
            BlockDiagonalMap::identity(4)
        );
        let p = op(&[0.25]).cesaro_projector_closed(TAU, DEFAULT_RESONANCE_TOL);
        assert_eq!(p, BlockDiagonalMap::zeros(1));
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        // θ = 2π·golden ratio at w = 1
        let p = op(&[(TAU * golden).powi(2)]).cesaro_projector_closed(1.0, DEFAULT_RESONANCE_TOL);
        assert_eq!(p, BlockDiagonalMap::zeros(1));
    }

    #[test]
    fn empirical_projector_special_angles() {
        let crit = SpectralOperator::critical(3, TAU).unwrap();
        for n in [1, 7, 100] {
            let p = crit.cesaro_projector_empirical(TAU, n).unwrap();
            assert!(p.max_abs_diff(&BlockDiagonalMap::identity(3)) < 1e-12);
        }
        // θ = π: I, −I, I, ... cancels for odd n
        let o = op(&[0.25]);
        for n in [1, 3, 101] {
            let p = o.cesaro_projector_empirical(TAU, n).unwrap();
            assert!(p.block(0).abs().max() < 1e-14, "n = {n}");
        }
        assert!(o.cesaro_projector_empirical(TAU, 0).is_err());
    }

    #[test]
    fn power_sum_matches_direct_sum() {
        for &theta in &[0.3, 1.0, 2.5, PI, 4.0, 6.0, TAU + 1e-7] {
            for n in [1usize, 2, 5, 40] {
                let (c, s) = rotation_power_sum(theta, n);
                let dc: f64 = (0..=n).map(|j| (j as f64 * theta).cos()).sum();
                let ds: f64 = (0..=n).map(|j| (j as f64 * theta).sin()).sum();
                assert_abs_diff_eq!(c, dc, epsilon = 1e-9);
                assert_abs_diff_eq!(s, ds, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn ht_norm_examples() {
        let o = op(&[2.0]);
        let phi = PhaseVector::from_arrays(&[[1.0, 0.0]]);
        assert_abs_diff_eq!(o.ht_inner(&phi, &phi).unwrap(), 4.0);
        assert_abs_diff_eq!(o.ht_norm(&phi).unwrap(), 2.0);
        assert_eq!(o.ht_norm(&PhaseVector::zeros(1)).unwrap(), 0.0);
    }

    #[test]
    fn dvector_round_trip() {
        let phi = PhaseVector::from_arrays(&[[1.0, 2.0], [3.0, 4.0]]);
        let v = phi.to_dvector();
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(PhaseVector::from_dvector(&v).unwrap(), phi);
        assert!(PhaseVector::from_dvector(&DVector::zeros(3)).is_err());
    }

    fn spectrum() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..50.0, 1..8).prop_map(|mut v| {
            v.sort_by(f64::total_cmp);
            v
        })
    }

    fn phase(n: usize) -> impl Strategy<Value = PhaseVector> {
        prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), n)
            .prop_map(|v| PhaseVector::from_pairs(v.into_iter().map(|(a, b)| Pair::new(a, b)).collect()))
    }

    proptest! {
        #[test]
        fn group_law_and_isometry(
            (l, phi) in spectrum().prop_flat_map(|l| { let n = l.len(); (Just(l), phase(n)) }),
            t in -20.0f64..20.0,
            s in -20.0f64..20.0,
        ) {
            let o = SpectralOperator::new(l).unwrap();
            let two_step = o.evolve(t, &o.evolve(s, &phi).unwrap()).unwrap();
            let one_step = o.evolve(t + s, &phi).unwrap();
            // independent route: product of explicit 2×2 rotation matrices
            let product = o.evolution(t).compose(&o.evolution(s)).unwrap().apply(&phi).unwrap();
            let scale = 1.0 + phi.max_abs();
            prop_assert!((&two_step - &one_step).max_abs() <= 1e-12 * scale * (1.0 + (t.abs() + s.abs())));
            prop_assert!((&product - &one_step).max_abs() <= 1e-12 * scale * (1.0 + (t.abs() + s.abs())));
            let moved = o.evolve(t, &phi).unwrap();
            prop_assert!((o.ht_norm(&moved).unwrap() - o.ht_norm(&phi).unwrap()).abs()
                <= 1e-12 * (1.0 + o.ht_norm(&phi).unwrap()));
            prop_assert!((moved.norm() - phi.norm()).abs() <= 1e-12 * (1.0 + phi.norm()));
        }

        #[test]
        fn monodromy_matches_evolve(
            (l, phi) in spectrum().prop_flat_map(|l| { let n = l.len(); (Just(l), phase(n)) }),
            w in 0.1f64..10.0,
        ) {
            let o = SpectralOperator::new(l).unwrap();
            let u = o.monodromy(w).unwrap();
            let a = u.apply(&phi).unwrap();
            let b = o.evolve(w, &phi).unwrap();
            prop_assert!((&a - &b).max_abs() <= 1e-14 * (1.0 + phi.max_abs()));
            prop_assert!((a.norm() - phi.norm()).abs() <= 1e-12 * (1.0 + phi.norm()));
            for blk in u.blocks() {
                prop_assert!((blk.transpose() * blk - Block::identity()).abs().max() <= 1e-14);
            }
        }

        #[test]
        fn projector_laws(l in spectrum(), w in 0.1f64..10.0, resonant in prop::collection::vec(any::<bool>(), 8)) {
            // force some modes onto the critical spectrum
            let mut l = l;
            for (k, lk) in l.iter_mut().enumerate() {
                if resonant[k] {
                    *lk = (TAU * (k + 1) as f64 / w).powi(2);
                }
            }
            l.sort_by(f64::total_cmp);
            let o = SpectralOperator::new(l).unwrap();
            let p = o.cesaro_projector_closed(w, DEFAULT_RESONANCE_TOL);
            let u = o.monodromy(w).unwrap();
            prop_assert!(p.compose(&p).unwrap().max_abs_diff(&p) <= 1e-14);
            prop_assert!(p.transpose().max_abs_diff(&p) <= 1e-14);
            prop_assert!(u.compose(&p).unwrap().max_abs_diff(&p) <= 1e-12);
            prop_assert!(p.compose(&u).unwrap().max_abs_diff(&p) <= 1e-12);
        }

        #[test]
        fn cesaro_mean_converges(theta in 0.05f64..(TAU - 0.05), n in 1usize..5000) {
            let o = SpectralOperator::new(vec![theta * theta]).unwrap();
            let emp = o.cesaro_projector_empirical(1.0, n).unwrap();
            let closed = o.cesaro_projector_closed(1.0, DEFAULT_RESONANCE_TOL);
            let d = resonance_distance(theta);
            // |Σ e^{ijθ}| ≤ 1/|sin(θ/2)|, and |sin(d/2)| = |sin(θ/2)|
            let bound = 1.0 / ((n + 1) as f64 * (0.5 * d).sin());
            prop_assert!(emp.max_abs_diff(&closed) <= bound * (1.0 + 1e-9));
        }
    }
}
