//! JSON problem documents. Mode indices are one-based throughout.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::DMatrix;
use pbvp_core::forcing::{ForcingFunction, SampledForcing, Slot, TrigTerm};
use pbvp_core::linear::{BvpProblem, LinearSettings, DEFAULT_MU, DEFAULT_SOLVABILITY_TOL};
use pbvp_core::lyapunov_schmidt::{
    Factor, IterationSettings, LinearRhs, NonlinearRhs, PolynomialRhs, PolynomialTerm, RootSettings,
};
use pbvp_core::newton::{NewtonSettings, DEFAULT_RANK_TOL};
use pbvp_core::quadrature::DEFAULT_GRID_SIZE;
use pbvp_core::spectral::{PhaseVector, SpectralOperator, DEFAULT_RESONANCE_TOL};
use pbvp_core::vdp::{build_vdp_problem, VanDerPolRhs, VdpConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Linear,
    Nonlinear,
    Vdp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    /// `λ_k = k²`.
    #[serde(rename = "k^2")]
    KSquared,
    /// `λ_k = 4π²k²/w²`: every mode resonant.
    #[serde(rename = "critical")]
    Critical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum OperatorSpec {
    Eigenvalues { eigenvalues: Vec<f64> },
    Rule { rule: Rule, n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTermDoc {
    pub mode: usize,
    pub slot: Slot,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
    #[serde(default)]
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesDoc {
    /// `M + 1` states on the uniform grid, each a list of pairs.
    pub values: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub interpolate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    Trig(Vec<TrigTermDoc>),
    Samples(SamplesDoc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDoc {
    pub mode: usize,
    pub slot: Slot,
    pub power: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialTermDoc {
    pub mode: usize,
    pub slot: Slot,
    pub coeff: f64,
    #[serde(default)]
    pub factors: Vec<FactorDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedSystem {
    VanDerPol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearSpec {
    System(NamedSystem),
    Polynomial(Vec<PolynomialTermDoc>),
    /// Dense matrix `B`, `Z = Bφ`, rows in interleaved coordinates.
    Linear(Vec<Vec<f64>>),
}

/// Solver settings; omitted fields take the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SettingsDoc {
    pub grid_size: usize,
    pub resonance_tol: f64,
    pub solvability_tol: f64,
    pub mu: f64,
    /// Terms of each series sum; the series cross-check is skipped when absent.
    pub series_terms: Option<usize>,
    pub eps: f64,
    pub tol: f64,
    pub obstruction_tol: f64,
    pub max_iter: usize,
    pub rank_tol: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub b0_step: f64,
    pub b0_cross_check_tol: f64,
    pub seed: u64,
    pub random_starts: usize,
    pub literal_boundary_data: bool,
}

impl Default for SettingsDoc {
    fn default() -> Self {
        let it = IterationSettings::default();
        let root = RootSettings::default();
        Self {
            grid_size: DEFAULT_GRID_SIZE,
            resonance_tol: DEFAULT_RESONANCE_TOL,
            solvability_tol: DEFAULT_SOLVABILITY_TOL,
            mu: DEFAULT_MU,
            series_terms: None,
            eps: it.eps,
            tol: it.tol,
            obstruction_tol: it.obstruction_tol,
            max_iter: it.max_iter,
            rank_tol: DEFAULT_RANK_TOL,
            newton_tol: root.newton.tol,
            newton_max_iter: root.newton.max_iter,
            b0_step: root.b0_step,
            b0_cross_check_tol: root.b0_cross_check_tol,
            seed: 0,
            random_starts: 0,
            literal_boundary_data: false,
        }
    }
}

impl SettingsDoc {
    pub fn linear(&self) -> LinearSettings {
        LinearSettings {
            grid_size: self.grid_size,
            resonance_tol: self.resonance_tol,
            solvability_tol: self.solvability_tol,
        }
    }

    pub fn newton(&self) -> NewtonSettings {
        NewtonSettings {
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
            rank_tol: self.rank_tol,
            ..Default::default()
        }
    }

    pub fn root(&self) -> RootSettings {
        RootSettings {
            newton: self.newton(),
            b0_step: self.b0_step,
            b0_cross_check_tol: self.b0_cross_check_tol,
            condition_tol: self.obstruction_tol,
        }
    }

    pub fn iteration(&self) -> IterationSettings {
        IterationSettings {
            eps: self.eps,
            tol: self.tol,
            obstruction_tol: self.obstruction_tol,
            max_iter: self.max_iter,
            rank_tol: self.rank_tol,
            literal_boundary_data: self.literal_boundary_data,
            ..Default::default()
        }
    }
}

/// Command-line overrides of [`SettingsDoc`] fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub grid_size: Option<usize>,
    pub mu: Option<f64>,
    pub series_terms: Option<usize>,
    pub eps: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub resonance_tol: Option<f64>,
    pub rank_tol: Option<f64>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, s: &mut SettingsDoc) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { s.$f = v; })* };
        }
        set!(grid_size, mu, eps, tol, max_iter, resonance_tol, rank_tol, seed);
        if self.series_terms.is_some() {
            s.series_terms = self.series_terms;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub schema_version: String,
    pub kind: Kind,
    pub operator: OperatorSpec,
    #[serde(default = "default_period")]
    pub w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinear: Option<NonlinearSpec>,
    /// Free amplitudes `c̄` (linear), or the Newton start / fixed `c⁰` (nonlinear).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cbar: Option<Vec<[f64; 2]>>,
    /// Use `cbar` as `c⁰` without solving the amplitude equation.
    #[serde(default)]
    pub skip_newton: bool,
    /// Resonant modes allowed to move during the root solve; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<usize>>,
    #[serde(default)]
    pub settings: SettingsDoc,
}

fn default_period() -> f64 {
    TAU
}

/// Nonlinear term resolved from a document.
pub enum Rhs {
    VanDerPol(VanDerPolRhs),
    Polynomial(PolynomialRhs),
    Linear(LinearRhs),
}

impl Rhs {
    pub fn as_dyn(&self) -> &dyn NonlinearRhs {
        match self {
            Rhs::VanDerPol(z) => z,
            Rhs::Polynomial(z) => z,
            Rhs::Linear(z) => z,
        }
    }
}

fn zero_based(mode: usize, n: usize, what: &str) -> Result<usize, CliError> {
    if mode == 0 || mode > n {
        return Err(CliError::Input(format!("{what}: mode {mode} outside 1..={n}")));
    }
    Ok(mode - 1)
}

fn pairs(field: &str, v: &[[f64; 2]], n: usize) -> Result<PhaseVector, CliError> {
    if v.len() != n {
        return Err(CliError::Input(format!("{field}: expected {n} pairs, found {}", v.len())));
    }
    Ok(PhaseVector::from_arrays(v))
}

impl ProblemDocument {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let doc: Self = serde_json::from_str(text).map_err(|e| {
            CliError::Input(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        doc.check_version()?;
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    fn check_version(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Input(format!(
                "schema_version: unsupported \"{}\" (expected \"{SCHEMA_VERSION}\")",
                self.schema_version
            )));
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        match &self.operator {
            OperatorSpec::Eigenvalues { eigenvalues } => eigenvalues.len(),
            OperatorSpec::Rule { n, .. } => *n,
        }
    }

    pub fn operator(&self) -> Result<SpectralOperator, CliError> {
        let op = match &self.operator {
            OperatorSpec::Eigenvalues { eigenvalues } => SpectralOperator::new(eigenvalues.clone()),
            OperatorSpec::Rule { rule: Rule::KSquared, n } => {
                SpectralOperator::new((1..=*n).map(|k| (k * k) as f64).collect())
            }
            OperatorSpec::Rule { rule: Rule::Critical, n } => SpectralOperator::critical(*n, self.w),
        };
        op.map_err(|e| CliError::Input(format!("operator: {e}")))
    }

    fn forcing(&self, n: usize) -> Result<ForcingFunction, CliError> {
        Ok(match &self.forcing {
            None => ForcingFunction::Zero,
            Some(ForcingSpec::Trig(terms)) => ForcingFunction::Trig(
                terms
                    .iter()
                    .map(|t| {
                        Ok(TrigTerm {
                            mode: zero_based(t.mode, n, "forcing")?,
                            slot: t.slot,
                            cos_amp: t.cos,
                            sin_amp: t.sin,
                            omega: t.omega,
                        })
                    })
                    .collect::<Result<_, CliError>>()?,
            ),
            Some(ForcingSpec::Samples(s)) => ForcingFunction::Samples(SampledForcing {
                values: s
                    .values
                    .iter()
                    .map(|v| pairs("forcing.samples", v, n))
                    .collect::<Result<_, _>>()?,
                interpolate: s.interpolate,
            }),
        })
    }

    /// The linear part `(T, w, α, f)`.
    pub fn problem(&self) -> Result<BvpProblem, CliError> {
        let op = self.operator()?;
        let n = op.n_modes();
        let alpha = match &self.alpha {
            Some(a) => pairs("alpha", a, n)?,
            None => PhaseVector::zeros(n),
        };
        BvpProblem::new(op, self.w, alpha, self.forcing(n)?).map_err(|e| CliError::Input(e.to_string()))
    }

    pub fn cbar(&self) -> Result<PhaseVector, CliError> {
        match &self.cbar {
            Some(c) => pairs("cbar", c, self.n_modes()),
            None => Ok(PhaseVector::zeros(self.n_modes())),
        }
    }

    /// Zero-based support, if given.
    pub fn support(&self) -> Result<Option<Vec<usize>>, CliError> {
        self.support
            .as_ref()
            .map(|s| s.iter().map(|&k| zero_based(k, self.n_modes(), "support")).collect())
            .transpose()
    }

    /// Problem and nonlinear term for kinds `nonlinear` and `vdp`.
    pub fn nonlinear_problem(&self) -> Result<(BvpProblem, Rhs), CliError> {
        let n = self.n_modes();
        let named_vdp = matches!(self.nonlinear, Some(NonlinearSpec::System(NamedSystem::VanDerPol)));
        match self.kind {
            Kind::Linear => Err(CliError::Input("kind: expected nonlinear or vdp".into())),
            Kind::Vdp => {
                if self.nonlinear.is_some() && !named_vdp {
                    return Err(CliError::Input("nonlinear: kind vdp implies the van der Pol system".into()));
                }
                self.vdp_problem()
            }
            Kind::Nonlinear => {
                let problem = self.problem()?;
                let rhs = match &self.nonlinear {
                    None => return Err(CliError::Input("nonlinear: missing for kind nonlinear".into())),
                    Some(NonlinearSpec::System(NamedSystem::VanDerPol)) => {
                        Rhs::VanDerPol(VanDerPolRhs::new(&problem.op))
                    }
                    Some(NonlinearSpec::Polynomial(terms)) => {
                        let terms = terms
                            .iter()
                            .map(|t| {
                                Ok(PolynomialTerm {
                                    mode: zero_based(t.mode, n, "nonlinear")?,
                                    slot: t.slot,
                                    coeff: t.coeff,
                                    factors: t
                                        .factors
                                        .iter()
                                        .map(|f| {
                                            Ok(Factor {
                                                mode: zero_based(f.mode, n, "nonlinear")?,
                                                slot: f.slot,
                                                power: f.power,
                                            })
                                        })
                                        .collect::<Result<_, CliError>>()?,
                                })
                            })
                            .collect::<Result<_, CliError>>()?;
                        Rhs::Polynomial(
                            PolynomialRhs::new(n, terms).map_err(|e| CliError::Input(e.to_string()))?,
                        )
                    }
                    Some(NonlinearSpec::Linear(rows)) => {
                        if rows.len() != 2 * n || rows.iter().any(|r| r.len() != 2 * n) {
                            return Err(CliError::Input(format!("nonlinear.linear: expected a {0}x{0} matrix", 2 * n)));
                        }
                        Rhs::Linear(LinearRhs {
                            matrix: DMatrix::from_fn(2 * n, 2 * n, |r, c| rows[r][c]),
                        })
                    }
                };
                Ok((problem, rhs))
            }
        }
    }

    fn vdp_problem(&self) -> Result<(BvpProblem, Rhs), CliError> {
        let n = self.n_modes();
        if let OperatorSpec::Eigenvalues { eigenvalues } = &self.operator {
            let crit = SpectralOperator::critical(n, self.w).map_err(|e| CliError::Input(e.to_string()))?;
            let off = eigenvalues
                .iter()
                .zip(crit.eigenvalues())
                .any(|(a, b)| (a - b).abs() > 1e-12 * b.max(1.0));
            if off {
                return Err(CliError::Input("operator: van der Pol needs the critical spectrum".into()));
            }
        }
        if matches!(self.operator, OperatorSpec::Rule { rule: Rule::KSquared, .. }) && (self.w - TAU).abs() > 1e-12 {
            return Err(CliError::Input("operator: rule k^2 is critical only for w = 2π".into()));
        }
        if self.alpha.as_ref().is_some_and(|a| a.iter().flatten().any(|v| *v != 0.0)) || self.forcing.is_some() {
            return Err(CliError::Input("van der Pol problems have alpha = 0 and no forcing".into()));
        }
        let cfg = VdpConfig {
            n_modes: n,
            w: self.w,
            eps: self.settings.eps,
            support: self.support.clone().unwrap_or_else(|| (1..=n).collect()),
        };
        let (p, z) = build_vdp_problem(&cfg).map_err(|e| CliError::Input(e.to_string()))?;
        Ok((p, Rhs::VanDerPol(z)))
    }
}
