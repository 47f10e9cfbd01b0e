//! Inhomogeneous term `f(t)` of the linear problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::quadrature::TimeGrid;
use crate::spectral::{Pair, PhaseVector};

/// Which copy of `H` a component lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    X,
    Y,
}

impl Slot {
    pub fn index(self) -> usize {
        match self {
            Slot::X => 0,
            Slot::Y => 1,
        }
    }
}

/// `a·cos(ωt) + b·sin(ωt)` added to one component of one mode (zero-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub mode: usize,
    pub slot: Slot,
    pub cos_amp: f64,
    pub sin_amp: f64,
    pub omega: f64,
}

impl TrigTerm {
    pub fn value(&self, t: f64) -> f64 {
        let (s, c) = (self.omega * t).sin_cos();
        self.cos_amp * c + self.sin_amp * s
    }
}

/// Forcing samples on the uniform grid `t_j = j·w/M`, `j = 0..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledForcing {
    pub values: Vec<PhaseVector>,
    /// Allow linear interpolation when the quadrature grid differs from the
    /// sample grid. Off by default: mismatched grids are rejected.
    pub interpolate: bool,
}

impl SampledForcing {
    pub fn intervals(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    fn at(&self, t: f64, w: f64) -> PhaseVector {
        let m = self.intervals();
        let s = (t / w * m as f64).clamp(0.0, m as f64);
        let j = (s.floor() as usize).min(m - 1);
        let frac = s - j as f64;
        let mut v = self.values[j].scale(1.0 - frac);
        v.add_assign_scaled(&self.values[j + 1], frac);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum ForcingFunction {
    #[default]
    Zero,
    Trig(Vec<TrigTerm>),
    Samples(SampledForcing),
}

impl ForcingFunction {
    pub(crate) fn validate(&self, n_modes: usize) -> Result<()> {
        match self {
            ForcingFunction::Zero => Ok(()),
            ForcingFunction::Trig(terms) => {
                for t in terms {
                    if t.mode >= n_modes {
                        return Err(Error::ModeIndex {
                            index: t.mode,
                            n_modes,
                        });
                    }
                    if !(t.omega.is_finite() && t.cos_amp.is_finite() && t.sin_amp.is_finite()) {
                        return Err(Error::Config("forcing term has non-finite entries".into()));
                    }
                }
                Ok(())
            }
            ForcingFunction::Samples(s) => {
                let m = s.intervals();
                if m < 2 || m % 2 != 0 {
                    return Err(Error::Config(format!(
                        "sampled forcing needs an even number of intervals ≥ 2, got {m}"
                    )));
                }
                for v in &s.values {
                    v.check_modes(n_modes)?;
                    if !v.is_finite() {
                        return Err(Error::Config("sampled forcing has non-finite entries".into()));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ForcingFunction::Zero => true,
            ForcingFunction::Trig(t) => t.is_empty(),
            ForcingFunction::Samples(_) => false,
        }
    }

    /// `f(t)` for the analytic variants; samples are interpolated linearly.
    pub fn eval(&self, t: f64, w: f64, n_modes: usize) -> PhaseVector {
        match self {
            ForcingFunction::Zero => PhaseVector::zeros(n_modes),
            ForcingFunction::Trig(terms) => {
                let mut v = vec![Pair::zeros(); n_modes];
                for term in terms {
                    v[term.mode][term.slot.index()] += term.value(t);
                }
                PhaseVector::from_pairs(v)
            }
            ForcingFunction::Samples(s) => s.at(t, w),
        }
    }

    /// Values at every node of `grid`.
    pub fn sample(&self, grid: &TimeGrid, n_modes: usize) -> Result<Vec<PhaseVector>> {
        if let ForcingFunction::Samples(s) = self {
            if s.intervals() == grid.intervals {
                return Ok(s.values.clone());
            }
            if !s.interpolate {
                return Err(Error::Config(format!(
                    "forcing sampled on {} intervals but quadrature uses {}; \
                     enable interpolation or match the grids",
                    s.intervals(),
                    grid.intervals
                )));
            }
        }
        Ok(exec::map_range(grid.len(), |j| {
            self.eval(grid.node(j), grid.period, n_modes)
        }))
    }
}
