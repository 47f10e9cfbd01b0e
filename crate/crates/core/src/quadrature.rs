//! Composite Simpson quadrature on uniform grids of phase-vector samples.

use crate::error::{Error, Result};
use crate::spectral::PhaseVector;

/// Default number of Simpson panels on `[0, w]`.
pub const DEFAULT_GRID_SIZE: usize = 1024;

/// Uniform grid `t_j = j·w/M`, `j = 0..=M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub period: f64,
    pub intervals: usize,
}

impl TimeGrid {
    /// `intervals` must be even and at least 2.
    pub fn new(period: f64, intervals: usize) -> Result<Self> {
        if intervals < 2 || !intervals.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "grid size must be even and at least 2, got {intervals}"
            )));
        }
        crate::spectral::check_period(period)?;
        Ok(Self { period, intervals })
    }

    pub fn step(&self) -> f64 {
        self.period / self.intervals as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.intervals {
            self.period
        } else {
            j as f64 * self.step()
        }
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|j| self.node(j))
    }
}

/// Composite Simpson weight of node `j` (without the `h/3` factor).
fn simpson_weight(j: usize, m: usize) -> f64 {
    if j == 0 || j == m {
        1.0
    } else if j % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

/// `∫₀ʷ f` from samples on `grid`.
pub fn simpson(grid: &TimeGrid, values: &[PhaseVector]) -> PhaseVector {
    debug_assert_eq!(values.len(), grid.len());
    let n = values[0].n_modes();
    let mut acc = PhaseVector::zeros(n);
    for (j, v) in values.iter().enumerate() {
        acc.add_assign_scaled(v, simpson_weight(j, grid.intervals));
    }
    acc.scale(grid.step() / 3.0)
}

/// Scalar Simpson rule, used for the dense Jacobian integrals.
pub fn simpson_scalar_weights(grid: &TimeGrid) -> Vec<f64> {
    let h3 = grid.step() / 3.0;
    (0..grid.len())
        .map(|j| h3 * simpson_weight(j, grid.intervals))
        .collect()
}

/// Running integrals `∫₀^{t_j} f` at every node.
///
/// Even nodes use composite Simpson. Odd nodes add the one-panel
/// three-point rule `h/12·(5f₀ + 8f₁ − f₂)` to the preceding even node.
pub fn cumulative_simpson(grid: &TimeGrid, values: &[PhaseVector]) -> Vec<PhaseVector> {
    debug_assert_eq!(values.len(), grid.len());
    let h = grid.step();
    let n = values[0].n_modes();
    let mut out = Vec::with_capacity(values.len());
    out.push(PhaseVector::zeros(n));
    let mut even = PhaseVector::zeros(n);
    for j in (0..grid.intervals).step_by(2) {
        let (f0, f1, f2) = (&values[j], &values[j + 1], &values[j + 2]);
        let mut half = even.clone();
        half.add_assign_scaled(f0, 5.0 * h / 12.0);
        half.add_assign_scaled(f1, 8.0 * h / 12.0);
        half.add_assign_scaled(f2, -h / 12.0);
        out.push(half);
        even.add_assign_scaled(f0, h / 3.0);
        even.add_assign_scaled(f1, 4.0 * h / 3.0);
        even.add_assign_scaled(f2, h / 3.0);
        out.push(even.clone());
    }
    out
}
