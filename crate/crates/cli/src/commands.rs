use std::path::Path;
use std::time::Instant;

use pbvp_core::linear::{
    assemble_g, green_pseudoinverse, green_series, pseudosolve, verify_trajectory, Classification,
    SolvabilityReport, Trajectory, TrajectoryCheck,
};
use pbvp_core::lyapunov_schmidt::{
    find_generating_root, ls_iterate, root_at, GeneratingFamily, GeneratingRoot, IterationState, NonlinearRhs,
};
use pbvp_core::newton::NewtonSettings;
use pbvp_core::vdp::{
    cross_check_f, sample_points, torus_radius, torus_roots, torus_starts, verify_torus, AmplitudePairs,
    CrossCheckReport, TorusReport, VdpConfig,
};
use pbvp_core::{Error, PhaseVector};
use serde::Serialize;

use crate::document::{Kind, Overrides, ProblemDocument};
use crate::error::{CliError, Exit};
use crate::output::{fmt_num, table_csv, OutDir};

#[derive(Debug, Clone, Serialize)]
pub struct SeriesCheck {
    pub mu: f64,
    pub terms: usize,
    pub max_abs_difference: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryRow {
    pub k: usize,
    pub c: Vec<[f64; 2]>,
    pub increment_norm: f64,
    pub boundary_residual: f64,
    pub absorbed_obstruction: f64,
    pub unabsorbed_obstruction: f64,
    pub correction_norm: f64,
    pub exceeds_q: bool,
}

impl From<&IterationState> for HistoryRow {
    fn from(s: &IterationState) -> Self {
        Self {
            k: s.k,
            c: s.c.to_arrays(),
            increment_norm: s.increment_norm,
            boundary_residual: s.boundary_residual,
            absorbed_obstruction: s.absorbed_obstruction,
            unabsorbed_obstruction: s.unabsorbed_obstruction,
            correction_norm: s.correction_norm,
            exceeds_q: s.exceeds_q,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RootRow {
    pub start: usize,
    pub c0: Option<Vec<[f64; 2]>>,
    pub f_residual: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TorusRow {
    pub start: usize,
    pub pairs: Option<Vec<[f64; 2]>>,
    pub report: Option<TorusReport>,
    pub error: Option<String>,
}

/// Report written as `report.json` by every command.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ResultDocument {
    pub command: &'static str,
    pub outcome: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solvability: Option<SolvabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_value: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary_equation_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series_check: Option<SeriesCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roots: Option<Vec<RootRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generating_root: Option<GeneratingRoot>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<HistoryRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<TrajectoryCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub torus: Option<Vec<TorusRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_check: Option<CrossCheckReport>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
    pub elapsed_ms: f64,
}

fn load(input: &Path, overrides: &Overrides) -> Result<ProblemDocument, CliError> {
    let mut doc = ProblemDocument::read(input)?;
    overrides.apply(&mut doc.settings);
    Ok(doc)
}

fn finish(mut out: OutDir, mut report: ResultDocument, exit: Exit, start: Instant) -> Result<Exit, CliError> {
    report.exit_code = exit.code();
    report.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    out.files.push("report.json".into());
    report.files = out.files.clone();
    out.json("report.json", &report)?;
    Ok(exit)
}

/// Solvability report plus the solution (or pseudosolution) trajectory.
pub fn cmd_solve_linear(input: &Path, out_dir: &Path, overrides: &Overrides) -> Result<Exit, CliError> {
    let start = Instant::now();
    let doc = load(input, overrides)?;
    if doc.kind != Kind::Linear {
        return Err(CliError::Input("kind: solve-linear expects a linear document".into()));
    }
    let problem = doc.problem()?;
    let cbar = doc.cbar()?;
    let settings = doc.settings.linear();
    let ps = pseudosolve(&problem, &cbar, &settings)?;
    let check = verify_trajectory(&problem, &ps.trajectory)?;

    let series_check = doc.settings.series_terms.map(|terms| {
        let run = || -> pbvp_core::Result<f64> {
            let g = assemble_g(&problem, settings.grid_size)?;
            let a = green_pseudoinverse(&problem.op, problem.w, &g, settings.resonance_tol)?;
            let b = green_series(&problem.op, problem.w, &g, doc.settings.mu, terms, terms, settings.resonance_tol)?;
            Ok((&a - &b).max_abs())
        };
        let (max_abs_difference, error) = match run() {
            Ok(d) => (Some(d), None),
            Err(e) => (None, Some(e.to_string())),
        };
        SeriesCheck { mu: doc.settings.mu, terms, max_abs_difference, error }
    });

    let mut out = OutDir::create(out_dir)?;
    out.trajectory("trajectory.csv", &ps.trajectory)?;
    let (exit, outcome) = match ps.report.classification {
        Classification::Solvable => (Exit::Ok, "solvable"),
        Classification::PseudoOnly => (Exit::PseudoOnly, "pseudo_only"),
    };
    let report = ResultDocument {
        command: "solve-linear",
        outcome: outcome.into(),
        initial_value: Some(ps.initial_value.to_arrays()),
        boundary_equation_residual: Some(ps.residual),
        solvability: Some(ps.report),
        series_check,
        verification: Some(check),
        ..Default::default()
    };
    finish(out, report, exit, start)
}

fn history_csv(history: &[IterationState]) -> String {
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|s| {
            vec![
                s.k.to_string(),
                fmt_num(s.increment_norm),
                fmt_num(s.boundary_residual),
                fmt_num(s.absorbed_obstruction),
                fmt_num(s.unabsorbed_obstruction),
                fmt_num(s.correction_norm),
            ]
        })
        .collect();
    table_csv(
        &["k", "increment", "boundary_residual", "absorbed_obstruction", "unabsorbed_obstruction", "correction_norm"],
        &rows,
    )
}

fn roots_csv(roots: &[RootRow]) -> String {
    let mut rows = Vec::new();
    for r in roots {
        if let Some(c) = &r.c0 {
            for (k, p) in c.iter().enumerate() {
                rows.push(vec![
                    r.start.to_string(),
                    (k + 1).to_string(),
                    fmt_num(p[0]),
                    fmt_num(p[1]),
                    fmt_num(p[0].hypot(p[1])),
                ]);
            }
        }
    }
    table_csv(&["start", "mode", "c1", "c2", "radius"], &rows)
}

/// Starting amplitudes: `cbar` (or radius 1, phase 0 on the support for van
/// der Pol), then `random_starts` seeded perturbations of it.
fn root_starts(doc: &ProblemDocument, family: &GeneratingFamily) -> Result<Vec<PhaseVector>, CliError> {
    let n = doc.n_modes();
    let base = match (&doc.cbar, doc.kind) {
        (Some(_), _) => doc.cbar()?,
        (None, Kind::Vdp) => {
            let support = doc.support.clone().unwrap_or_else(|| (1..=n).collect());
            torus_starts(&VdpConfig::new(n, support), 0, doc.settings.seed).remove(0).pairs
        }
        (None, _) => PhaseVector::zeros(n),
    };
    let mut starts = vec![base.clone()];
    for s in sample_points(n, doc.settings.random_starts, 1.0, doc.settings.seed) {
        starts.push(family.projector().apply(&(&base + &s.pairs))?);
    }
    Ok(starts)
}

/// Generating roots, `B₀` diagnostics, the correction iteration and its
/// verification.
pub fn cmd_solve_nonlinear(input: &Path, out_dir: &Path, overrides: &Overrides) -> Result<Exit, CliError> {
    let start = Instant::now();
    let doc = load(input, overrides)?;
    let (problem, rhs) = doc.nonlinear_problem()?;
    let z: &dyn NonlinearRhs = rhs.as_dyn();
    let family = GeneratingFamily::new(problem, doc.settings.linear())?;
    let root_settings = doc.settings.root();
    let support = doc.support()?;
    let mut out = OutDir::create(out_dir)?;
    let mut report = ResultDocument { command: "solve-nonlinear", ..Default::default() };

    let root = if doc.skip_newton {
        let c0 = doc.cbar()?;
        let root = root_at(&family, z, &c0, &root_settings)?;
        report.roots = Some(vec![RootRow {
            start: 0,
            c0: Some(root.c0.to_arrays()),
            f_residual: Some(root.f_residual),
            error: None,
        }]);
        root
    } else {
        let starts = root_starts(&doc, &family)?;
        let found: Vec<_> = starts
            .iter()
            .map(|s| find_generating_root(&family, z, s, support.as_deref(), &root_settings))
            .collect();
        report.roots = Some(
            found
                .iter()
                .enumerate()
                .map(|(i, r)| match r {
                    Ok(r) => RootRow { start: i, c0: Some(r.c0.to_arrays()), f_residual: Some(r.f_residual), error: None },
                    Err(e) => RootRow { start: i, c0: None, f_residual: None, error: Some(e.to_string()) },
                })
                .collect(),
        );
        out.write("roots.csv", &roots_csv(report.roots.as_deref().unwrap_or_default()))?;
        match found.into_iter().next().expect("at least one start") {
            Ok(r) => r,
            Err(e) => {
                report.outcome = "root_not_found".into();
                report.warnings.push(e.to_string());
                let exit = CliError::from(e).exit();
                return finish(out, report, exit, start);
            }
        }
    };
    report.warnings.extend(root.conditions.warnings.iter().cloned());
    report.generating_root = Some(root.clone());

    match ls_iterate(&family, z, &root, &doc.settings.iteration()) {
        Ok(run) => {
            out.trajectory("generating.csv", &run.generating)?;
            out.trajectory("solution.csv", &run.solution)?;
            out.write("history.csv", &history_csv(&run.history))?;
            report.history = Some(run.history.iter().map(HistoryRow::from).collect());
            report.verification =
                Some(TrajectoryCheck { ode_residual: run.ode_residual, boundary_residual: run.boundary_residual });
            for w in run.warnings {
                if !report.warnings.contains(&w) {
                    report.warnings.push(w);
                }
            }
            report.outcome = "converged".into();
            finish(out, report, Exit::Ok, start)
        }
        Err(Error::IterationNonConvergence(failure)) => {
            out.trajectory("generating.csv", &failure.generating)?;
            if let Some(last) = failure.history.last() {
                let last_iterate: Trajectory = failure.generating.add(&last.correction);
                out.trajectory("last_iterate.csv", &last_iterate)?;
            }
            out.write("history.csv", &history_csv(&failure.history))?;
            report.history = Some(failure.history.iter().map(HistoryRow::from).collect());
            report.warnings.push(failure.reason.clone());
            report.outcome = "not_converged".into();
            finish(out, report, Exit::NonConvergence, start)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TorusOptions {
    pub n_modes: usize,
    /// One-based.
    pub support: Vec<usize>,
    pub random_starts: usize,
    pub seed: u64,
    pub grid_size: usize,
    pub tol: f64,
    pub newton: NewtonSettings,
    pub cross_check_samples: usize,
    pub cross_check_tol: f64,
}

impl Default for TorusOptions {
    fn default() -> Self {
        Self {
            n_modes: 1,
            support: vec![1],
            random_starts: 4,
            seed: 0,
            grid_size: 512,
            tol: 1e-10,
            newton: NewtonSettings::default(),
            cross_check_samples: 10,
            cross_check_tol: 1e-8,
        }
    }
}

/// Newton roots of the van der Pol amplitude system on a support, checked
/// against the torus radius and cross-checked against the quadrature map.
pub fn cmd_vdp_torus(opts: &TorusOptions, out_dir: &Path) -> Result<Exit, CliError> {
    let start = Instant::now();
    let cfg = VdpConfig::new(opts.n_modes, opts.support.clone());
    cfg.validate().map_err(|e| CliError::Input(e.to_string()))?;
    if opts.support.is_empty() {
        return Err(CliError::Input("support: at least one mode required".into()));
    }
    let support = cfg.support_indices();
    let expected = torus_radius(support.len())?;
    let roots = torus_roots(&cfg, opts.random_starts, opts.seed, &opts.newton);
    let mut rows = Vec::new();
    let mut csv_rows = Vec::new();
    let mut all_ok = true;
    for (i, r) in roots.iter().enumerate() {
        match r {
            Ok(pairs) => {
                let rep = verify_torus(pairs, opts.tol);
                all_ok &= rep.matches_formula && rep.support == one_based(&support);
                for &k in &support {
                    let p = pairs.pairs.pair(k);
                    csv_rows.push(vec![
                        i.to_string(),
                        (k + 1).to_string(),
                        fmt_num(p.x),
                        fmt_num(p.y),
                        fmt_num(p.norm()),
                    ]);
                }
                rows.push(TorusRow { start: i, pairs: Some(pairs.pairs.to_arrays()), report: Some(rep), error: None });
            }
            Err(e) => {
                all_ok = false;
                rows.push(TorusRow { start: i, pairs: None, report: None, error: Some(e.to_string()) });
            }
        }
    }
    let samples: Vec<AmplitudePairs> = sample_points(opts.n_modes, opts.cross_check_samples, 1.5, opts.seed);
    let cross = cross_check_f(&cfg, &samples, opts.grid_size, opts.cross_check_tol)?;
    all_ok &= cross.consistent;

    let mut out = OutDir::create(out_dir)?;
    out.write("torus.csv", &table_csv(&["start", "mode", "c1", "c2", "radius"], &csv_rows))?;
    let exit = if all_ok { Exit::Ok } else { Exit::VerificationFailed };
    let report = ResultDocument {
        command: "vdp-torus",
        outcome: if all_ok { "verified" } else { "verification_failed" }.into(),
        expected_radius: Some(expected),
        torus: Some(rows),
        cross_check: Some(cross),
        ..Default::default()
    };
    finish(out, report, exit, start)
}

fn one_based(support: &[usize]) -> Vec<usize> {
    support.iter().map(|k| k + 1).collect()
}
