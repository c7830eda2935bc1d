//! Command dispatch. Each command returns its summary and the files to write.

use std::sync::Arc;

use maghelm_core::estimates::{
    estimate_sweep, hardy_constant, hardy_mesh, operator_norm_sweep, EstimateExtras, PowerOptions, SweepResult,
};
use maghelm_core::evolution::{smoothing_curve, SmoothingOptions};
use maghelm_core::farfield::{cross_section, dyadic_window, spectral_reconstruction, support_radius};
use maghelm_core::identities::{alpha1_residual, morawetz_residual, IdentityResidual};
use maghelm_core::norms::{f_fields, log_slope};
use maghelm_core::potentials::PotentialKind;
use maghelm_core::radial_solver::{resolve_green_on, resolve_on, ModeSolution};
use maghelm_core::source::{HarmonicTerm, RadialProfile, SourceSpec};
use maghelm_core::{EstimateReport, MaghelmError, RadialMesh, SolverKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Command, IdentityChoice, RunConfig, SolverChoice};
use crate::emit::{json_bytes, report_order, report_table, LinePlot, Series, Table};
use crate::error::CliError;

/// One pass/fail check of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn check(name: &str, passed: bool, detail: String) -> Self {
        Assertion { name: name.into(), passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedReport {
    pub source: String,
    pub report: EstimateReport,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: Command,
    pub spec_hash: String,
    pub seed: u64,
    pub passed: bool,
    pub assertions: Vec<Assertion>,
    pub reports: Vec<TaggedReport>,
    pub identities: Vec<IdentityResidual>,
    pub results: Value,
    pub config: RunConfig,
}

impl Summary {
    pub fn first_failure(&self) -> Option<&Assertion> {
        self.assertions.iter().find(|a| !a.passed)
    }
}

/// A finished run: the summary plus named artifacts (summary included).
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Summary,
    pub files: Vec<(String, Vec<u8>)>,
}

struct Draft {
    assertions: Vec<Assertion>,
    reports: Vec<TaggedReport>,
    identities: Vec<IdentityResidual>,
    results: Value,
    tables: Vec<(String, Table)>,
    plots: Vec<(String, LinePlot)>,
}

impl Draft {
    fn new() -> Self {
        Draft {
            assertions: Vec::new(),
            reports: Vec::new(),
            identities: Vec::new(),
            results: Value::Null,
            tables: Vec::new(),
            plots: Vec::new(),
        }
    }
}

/// Runs a resolved config (see [`RunConfig::resolve`]).
pub fn run(config: &RunConfig) -> Result<Outcome, CliError> {
    let command = config.command.ok_or_else(|| CliError::Config("command not resolved".into()))?;
    let hash = config.spec_hash();
    let draft = match command {
        Command::Solve => solve(config, &hash)?,
        Command::Identity => identity(config, &hash)?,
        Command::Estimates => estimates(config, &hash)?,
        Command::Hardy => hardy(config, &hash)?,
        Command::Farfield => farfield(config, &hash)?,
        Command::Spectral => spectral(config, &hash)?,
        Command::Evolve => evolve(config, &hash)?,
        Command::Report => report(config, &hash)?,
    };
    let summary = Summary {
        command,
        spec_hash: hash,
        seed: config.seed,
        passed: draft.assertions.iter().all(|a| a.passed),
        assertions: draft.assertions,
        reports: draft.reports,
        identities: draft.identities,
        results: draft.results,
        config: config.clone(),
    };
    let mut files = vec![("summary.json".to_string(), json_bytes(&summary))];
    files.extend(draft.tables.into_iter().map(|(name, t)| (name, t.to_csv())));
    files.extend(draft.plots.into_iter().map(|(name, p)| (name, p.to_svg().into_bytes())));
    Ok(Outcome { summary, files })
}

fn mesh_for(config: &RunConfig, nodes: Option<usize>) -> Result<Arc<RadialMesh>, CliError> {
    let p = config.problem.spec();
    let mesh = match nodes {
        Some(n) => RadialMesh::graded(p.r_min, p.r_max, n)?,
        None => RadialMesh::default_for(&p)?,
    };
    Ok(Arc::new(mesh))
}

fn l2_parts(sols: &[ModeSolution], other: Option<&[ModeSolution]>) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, s) in sols.iter().enumerate() {
        let m = s.mesh();
        let rho = s.spec.d as f64 - 1.0;
        den += m.integrate_with(|i| s.u.values[i].norm_sqr() * m.r(i).powf(rho));
        if let Some(o) = other {
            num += m.integrate_with(|i| (s.u.values[i] - o[j].u.values[i]).norm_sqr() * m.r(i).powf(rho));
        }
    }
    (num, den)
}

fn solve(config: &RunConfig, hash: &str) -> Result<Draft, CliError> {
    let section = config.solve.clone().unwrap_or_default();
    let spec = config.potential_spec()?;
    let problem = config.problem.spec();
    let mesh = mesh_for(config, section.nodes)?;
    let mut bundles: Vec<Vec<ModeSolution>> = Vec::new();
    if section.solver != SolverChoice::Green {
        bundles.push(resolve_on(&spec, &config.f, &problem, &mesh)?);
    }
    if section.solver != SolverChoice::Fd {
        bundles.push(resolve_green_on(&spec, &config.f, &problem, &mesh)?);
    }
    let mut d = Draft::new();
    let mut table = Table::new(&[
        "solver", "index", "sub", "r", "re_u", "im_u", "re_du", "im_du", "mesh_nodes", "spec_hash",
    ]);
    let mut plot = LinePlot::new("|u| against r", "r", "|u|");
    plot.log_x = true;
    plot.log_y = true;
    let mut modes = Vec::new();
    for sols in &bundles {
        for s in sols {
            let m = s.mesh();
            let solver = s.solver.as_str();
            for i in 0..m.len() {
                table.push(vec![
                    solver.into(),
                    s.mode.index.into(),
                    s.mode.sub.into(),
                    m.r(i).into(),
                    s.u.values[i].re.into(),
                    s.u.values[i].im.into(),
                    s.du.values[i].re.into(),
                    s.du.values[i].im.into(),
                    m.len().into(),
                    hash.into(),
                ]);
            }
            let (_, norm) = l2_parts(std::slice::from_ref(s), None);
            modes.push(json!({
                "solver": solver,
                "index": s.mode.index,
                "sub": s.mode.sub,
                "nu_eff": s.op.nu_eff,
                "l2_norm_sq": norm,
            }));
            plot.series.push(Series {
                name: format!("{solver} ({}, {})", s.mode.index, s.mode.sub),
                points: (0..m.len()).map(|i| (m.r(i), s.u.values[i].norm())).collect(),
            });
        }
    }
    let mut gap = Value::Null;
    if bundles.len() == 2 {
        let (num, den) = l2_parts(&bundles[1], Some(&bundles[0]));
        let rel = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
        gap = json!(rel);
        d.assertions.push(Assertion::check(
            "solver_agreement",
            rel <= section.tolerance,
            format!("relative L2 gap {rel:.6e} against tolerance {:.3e}", section.tolerance),
        ));
    }
    d.results = json!({ "mesh_nodes": mesh.len(), "modes": modes, "relative_l2_gap": gap });
    d.tables.push(("solution.csv".into(), table));
    d.plots.push(("solution.svg".into(), plot));
    Ok(d)
}

fn identity(config: &RunConfig, hash: &str) -> Result<Draft, CliError> {
    let section = config.identity.clone().unwrap_or_default();
    if section.nodes.is_empty() {
        return Err(CliError::EmptyGrid);
    }
    let spec = config.potential_spec()?;
    let problem = config.problem.spec();
    let mut d = Draft::new();
    let mut table = Table::new(&[
        "identity", "mesh_nodes", "h_max", "lhs", "rhs", "boundary_correction", "residual", "relative", "solver",
        "spec_hash",
    ]);
    let mut hs = Vec::new();
    let mut rel = Vec::new();
    for &n in &section.nodes {
        let mesh = mesh_for(config, Some(n))?;
        let sols = resolve_on(&spec, &config.f, &problem, &mesh)?;
        let res = match section.identity {
            IdentityChoice::Key => morawetz_residual(&sols, &section.multiplier)?,
            IdentityChoice::Alpha1 => alpha1_residual(&sols)?,
        };
        table.push(vec![
            res.identity_id.as_str().into(),
            mesh.len().into(),
            mesh.max_spacing().into(),
            res.lhs.into(),
            res.rhs.into(),
            res.boundary_correction.into(),
            res.residual.into(),
            res.relative().into(),
            SolverKind::Fd.as_str().into(),
            hash.into(),
        ]);
        hs.push(mesh.max_spacing());
        rel.push(res.relative());
        d.identities.push(res);
    }
    let finest = *rel.last().expect("non-empty");
    d.assertions.push(Assertion::check(
        "residual_tolerance",
        finest <= section.tolerance,
        format!("relative residual {finest:.6e} at the finest mesh against {:.3e}", section.tolerance),
    ));
    let reductions: Vec<f64> = rel.windows(2).map(|w| w[0] / w[1]).collect();
    if !reductions.is_empty() {
        let worst = reductions.iter().copied().fold(f64::INFINITY, f64::min);
        let exact = rel.iter().all(|&r| r == 0.0);
        d.assertions.push(Assertion::check(
            "residual_reduction",
            exact || worst >= section.min_reduction,
            format!("smallest reduction per refinement {worst:.4} against {}", section.min_reduction),
        ));
    }
    let order = if hs.len() >= 2 && rel.iter().all(|&r| r > 0.0) { log_slope(&hs, &rel) } else { f64::NAN };
    d.results = json!({ "observed_order": order, "reductions": reductions });
    let mut plot = LinePlot::new("identity residual against mesh width", "max h", "relative residual");
    plot.log_x = true;
    plot.log_y = true;
    plot.series.push(Series { name: "residual".into(), points: hs.into_iter().zip(rel).collect() });
    d.tables.push(("identity.csv".into(), table));
    d.plots.push(("identity.svg".into(), plot));
    Ok(d)
}

/// Seeded random annulus-free sources: smooth bumps in the radial and first modes.
pub fn random_sources(seed: u64, count: usize, mode_cutoff: u32) -> Vec<SourceSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let inner = rng.random_range(0.2..1.5);
            let outer = inner + rng.random_range(0.5..2.5);
            let mut terms = vec![HarmonicTerm {
                index: 0,
                sub: 0,
                coefficient: rng.random_range(0.5..1.5),
                profile: RadialProfile::Bump { inner, outer },
            }];
            let c1 = rng.random_range(-1.0..1.0);
            if mode_cutoff >= 1 {
                terms.push(HarmonicTerm { index: 1, sub: 0, coefficient: c1, profile: RadialProfile::Bump { inner, outer } });
            }
            SourceSpec::Harmonic { terms }
        })
        .collect()
}

fn sweep_row(kind: &str, source: &str, s: &SweepResult) -> Value {
    json!({
        "kind": kind,
        "source": source,
        "max_ratio": s.max_ratio,
        "dispersion": s.dispersion,
        "fit_exponent": s.fit_exponent,
        "converged": s.converged.iter().all(|&c| c),
    })
}

fn estimates(config: &RunConfig, hash: &str) -> Result<Draft, CliError> {
    let section = config.estimates.clone().expect("resolved");
    if section.kinds.is_empty() || section.grid.lambdas.is_empty() || section.grid.epsilons.is_empty() {
        return Err(CliError::EmptyGrid);
    }
    let spec = config.potential_spec()?;
    let base = config.problem.spec();
    let extras = EstimateExtras {
        r0: section.r0,
        lambda0: section.lambda0,
        weight: section.weight,
        ..EstimateExtras::default()
    };
    let mut sources = vec![("f".to_string(), config.f.clone())];
    for (j, s) in random_sources(config.seed, section.random_sources, base.mode_cutoff).into_iter().enumerate() {
        sources.push((format!("random_{j}"), s));
    }
    let mut d = Draft::new();
    let mut sweeps = Vec::new();
    let mut plot = LinePlot::new("estimate ratios against lambda", "lambda", "lhs / rhs");
    plot.log_x = true;
    plot.log_y = true;
    for kind in &section.kinds {
        for (label, src) in &sources {
            let res = estimate_sweep(*kind, &spec, src, &base, &section.grid, &extras)?;
            sweeps.push(sweep_row(kind.as_str(), label, &res));
            if let Some(bound) = section.max_dispersion {
                d.assertions.push(Assertion::check(
                    &format!("dispersion_{}_{label}", kind.as_str()),
                    res.dispersion <= bound,
                    format!("max/min ratio {:.4} against {bound}", res.dispersion),
                ));
            }
            if label == "f" {
                for &eps in &section.grid.epsilons {
                    plot.series.push(Series {
                        name: format!("{} eps={eps}", kind.as_str()),
                        points: res
                            .reports
                            .iter()
                            .filter(|r| r.params.epsilon == eps)
                            .map(|r| (r.params.lambda, r.ratio))
                            .collect(),
                    });
                }
            }
            d.reports.extend(res.reports.into_iter().map(|report| TaggedReport { source: label.clone(), report }));
        }
    }
    if section.operator_norm {
        let res = operator_norm_sweep(&spec, &base, &section.grid, PowerOptions::default())?;
        sweeps.push(sweep_row("bp_operator_norm", "operator", &res));
        d.reports.extend(res.reports.into_iter().map(|report| TaggedReport { source: "operator".into(), report }));
    }
    let finite = d.reports.iter().all(|t| t.report.ratio.is_finite());
    d.assertions.insert(
        0,
        Assertion::check("finite_ratios", finite, format!("{} reports", d.reports.len())),
    );
    d.results = json!({ "sweeps": sweeps });
    let rows: Vec<(String, EstimateReport)> = d.reports.iter().map(|t| (t.source.clone(), t.report.clone())).collect();
    d.tables.push(("estimates.csv".into(), report_table(&rows, hash)));
    d.plots.push(("estimates.svg".into(), plot));
    Ok(d)
}

fn hardy(config: &RunConfig, hash: &str) -> Result<Draft, CliError> {
    let section = config.hardy.clone().unwrap_or_default();
    let spec = config.potential_spec()?;
    let dim = config.problem.d;
    let mesh = match section.mesh {
        Some((a, b, n)) => RadialMesh::geometric(a, b, n)?,
        None => hardy_mesh()?,
    };
    let mut d = Draft::new();
    let mut table = Table::new(&["d", "hardy_constant", "bounded", "mesh_nodes", "r_min", "r_max", "solver", "spec_hash"]);
    let sharp = if dim >= 3 { Some(4.0 / ((dim as f64 - 2.0).powi(2))) } else { None };
    match hardy_constant(&spec, dim, &mesh, config.problem.mode_cutoff) {
        Ok(c) => {
            d.results = json!({ "hardy_constant": c, "bounded": true, "free_sharp_constant": sharp, "mesh_nodes": mesh.len() });
            if let (PotentialKind::Free, Some(s)) = (&config.potential, sharp) {
                d.assertions.push(Assertion::check(
                    "below_sharp_constant",
                    c <= s * (1.0 + 1e-9),
                    format!("{c:.10} against 4/(d-2)^2 = {s}"),
                ));
            }
            table.push(vec![
                (dim as usize).into(),
                c.into(),
                "true".into(),
                mesh.len().into(),
                mesh.r_min().into(),
                mesh.r_max().into(),
                SolverKind::Fd.as_str().into(),
                hash.into(),
            ]);
        }
        Err(MaghelmError::NoHardyInequality(reason)) => {
            d.results = json!({ "hardy_constant": null, "bounded": false, "reason": reason, "mesh_nodes": mesh.len() });
            table.push(vec![
                (dim as usize).into(),
                f64::INFINITY.into(),
                "false".into(),
                mesh.len().into(),
                mesh.r_min().into(),
                mesh.r_max().into(),
                SolverKind::Fd.as_str().into(),
                hash.into(),
            ]);
        }
        Err(e) => return Err(e.into()),
    }
    d.tables.push(("hardy.csv".into(), table));
    Ok(d)
}

fn farfield(config: &RunConfig, hash: &str) -> Result<Draft, CliError> {
    let section = config.farfield.clone().unwrap_or_default();
    let spec = config.potential_spec()?;
    let problem = config.problem.spec();
    let mesh = mesh_for(config, None)?;
    let sols = resolve_on(&spec, &config.f, &problem, &mesh)?;
    let fs = f_fields(&sols);
    let radii = match &section.radii {
        Some(r) => r.clone(),
        None => dyadic_window(&mesh, support_radius(&fs), section.window),
    };
    let res = cross_section(&sols, &fs, &radii)?;
    let mut d = Draft::new();
    let gap = if res.mass != 0.0 { (res.sphere_mass - res.mass).abs() / res.mass.abs() } else { 0.0 };
    d.assertions.push(Assertion::check(
        "mass_identity",
        gap <= section.tolerance,
        format!("sphere mass {:.10e} against pairing mass {:.10e}, relative gap {gap:.3e}", res.sphere_mass, res.mass),
    ));
    let mut table = Table::new(&["radius", "index", "sub", "re", "im", "abs", "mesh_nodes", "solver", "spec_hash"]);
    let mut plot = LinePlot::new("|F| against r", "r", "|F|");
    plot.log_x = true;
    for (m, &(index, sub)) in res.modes.iter().enumerate() {
        let rows = res.radii.iter().zip(&res.coefficients).map(|(&r, c)| (r, c[m]));
        for (r, c) in rows.chain(std::iter::once((f64::INFINITY, res.limit[m]))) {
            table.push(vec![
                r.into(),
                index.into(),
                sub.into(),
                c.re.into(),
                c.im.into(),
                c.norm().into(),
                mesh.len().into(),
                SolverKind::Fd.as_str().into(),
                hash.into(),
            ]);
        }
        plot.series.push(Series {
            name: format!("({index}, {sub})"),
            points: res.radii.iter().zip(&res.coefficients).map(|(&r, c)| (r, c[m].norm())).collect(),
        });
    }
    d.results = json!({
        "lambda": res.lambda,
        "sphere_mass": res.sphere_mass,
        "mass": res.mass,
        "relative_gap": gap,
        "convergence_rate": res.convergence_rate,
        "radii": res.radii,
        "limit": res.limit.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>(),
    });
    d.tables.push(("farfield.csv".into(), table));
    d.plots.push(("farfield.svg".into(), plot));
    Ok(d)
}

fn spectral(config: &RunConfig, hash: &str) -> Result<Draft, CliError> {
    let section = config.spectral.clone().expect("resolved");
    let lambdas = section.lambdas.values();
    if lambdas.is_empty() {
        return Err(CliError::EmptyGrid);
    }
    let spec = config.potential_spec()?;
    let base = config.problem.spec();
    let rec = spectral_reconstruction(&spec, &config.f, &base, &lambdas, section.rule)?;
    let mesh_nodes = RadialMesh::default_for(&base)?.len();
    let mut d = Draft::new();
    let ratio = rec.ratio();
    d.assertions.push(Assertion::check(
        "coverage",
        rec.warning.is_none(),
        rec.warning.clone().unwrap_or_else(|| format!("coverage {:.6}", rec.coverage)),
    ));
    d.assertions.push(Assertion::check(
        "reconstruction",
        (ratio - 1.0).abs() <= section.tolerance,
        format!("reconstructed / actual = {ratio:.6} against tolerance {}", section.tolerance),
    ));
    let mut table = Table::new(&["lambda", "mass", "mesh_nodes", "solver", "spec_hash"]);
    for (&l, &m) in rec.lambdas.iter().zip(&rec.masses) {
        table.push(vec![l.into(), m.into(), mesh_nodes.into(), SolverKind::Fd.as_str().into(), hash.into()]);
    }
    let mut plot = LinePlot::new("spectral mass against lambda", "lambda", "mass");
    plot.log_x = true;
    plot.series.push(Series { name: "mass".into(), points: rec.lambdas.iter().copied().zip(rec.masses.iter().copied()).collect() });
    d.results = json!({
        "reconstructed": rec.reconstructed,
        "actual": rec.actual,
        "ratio": ratio,
        "coverage": rec.coverage,
        "warning": rec.warning,
    });
    d.tables.push(("spectral.csv".into(), table));
    d.plots.push(("spectral.svg".into(), plot));
    Ok(d)
}

fn evolve(config: &RunConfig, hash: &str) -> Result<Draft, CliError> {
    let section = config.evolve.clone().expect("resolved");
    if section.horizons.is_empty() {
        return Err(CliError::EmptyGrid);
    }
    let spec = config.potential_spec()?;
    let problem = config.problem.spec();
    let opts = SmoothingOptions { nodes: section.nodes, ..SmoothingOptions::default() };
    let curve = smoothing_curve(&spec, &section.weight, &config.f, &problem, &section.horizons, section.forced, &opts)?;
    let mut d = Draft::new();
    let n = curve.horizons.len();
    let increments = curve.increments();
    let t_max = curve.horizons[n - 1];
    if !section.forced {
        if let Some(&last) = increments.last() {
            d.assertions.push(Assertion::check(
                "saturation",
                last <= section.max_increment,
                format!("I(T) - I(T/2) = {last:.4e} I(T/2) at T = {t_max} against {}", section.max_increment),
            ));
        }
    }
    d.assertions.push(Assertion::check(
        "reflection_free",
        t_max <= curve.crossing_time,
        format!("largest horizon {t_max} against crossing time {:.4}", curve.crossing_time),
    ));
    let kind = if section.forced { "smoothing_forced" } else { "smoothing" };
    if curve.reference[n - 1] > 0.0 {
        let r = EstimateReport::new(kind, curve.integrals[n - 1], curve.reference[n - 1], problem, section.nodes, SolverKind::Fd)?
            .with_notes(format!("T = {t_max}, retained {}", curve.retained));
        d.reports.push(TaggedReport { source: "f".into(), report: r });
    }
    let mut table = Table::new(&["horizon", "integral", "reference", "ratio", "mesh_nodes", "solver", "spec_hash"]);
    for j in 0..n {
        let ratio = if curve.reference[j] > 0.0 { curve.integrals[j] / curve.reference[j] } else { 0.0 };
        table.push(vec![
            curve.horizons[j].into(),
            curve.integrals[j].into(),
            curve.reference[j].into(),
            ratio.into(),
            section.nodes.into(),
            SolverKind::Fd.as_str().into(),
            hash.into(),
        ]);
    }
    let mut plot = LinePlot::new("weighted space-time integral", "T", "I(T)");
    plot.series.push(Series { name: kind.into(), points: curve.horizons.iter().copied().zip(curve.integrals.iter().copied()).collect() });
    d.results = json!({
        "horizons": curve.horizons,
        "integrals": curve.integrals,
        "reference": curve.reference,
        "increments": increments,
        "mean_lambda": curve.mean_lambda,
        "crossing_time": curve.crossing_time,
        "time_step": curve.time_step,
        "fastest": curve.fastest,
        "retained": curve.retained,
    });
    d.tables.push(("evolve.csv".into(), table));
    d.plots.push(("evolve.svg".into(), plot));
    Ok(d)
}

fn report(config: &RunConfig, hash: &str) -> Result<Draft, CliError> {
    let section = config.report.clone().expect("resolved");
    if section.inputs.is_empty() {
        return Err(CliError::EmptyGrid);
    }
    let mut d = Draft::new();
    let mut merged = Vec::new();
    let mut inputs = Vec::new();
    for path in &section.inputs {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let s: Summary = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        d.assertions.push(Assertion::check(
            &format!("input_{}", s.spec_hash),
            s.passed,
            format!("{} run {}", s.command.as_str(), if s.passed { "passed" } else { "failed" }),
        ));
        inputs.push(json!({ "command": s.command.as_str(), "spec_hash": s.spec_hash, "passed": s.passed }));
        merged.extend(s.reports.into_iter().map(|t| (t.source, t.report)));
    }
    merged.sort_by(|a, b| report_order(&a.1, &b.1).then_with(|| a.0.cmp(&b.0)));
    let reports: Vec<EstimateReport> = merged.iter().map(|t| t.1.clone()).collect();
    let mut plot = LinePlot::new("ratio against lambda", "lambda", "lhs / rhs");
    plot.log_x = true;
    plot.log_y = true;
    let mut kinds: Vec<&str> = reports.iter().map(|r| r.kind.as_str()).collect();
    kinds.sort();
    kinds.dedup();
    for k in kinds {
        plot.series.push(Series {
            name: k.into(),
            points: reports.iter().filter(|r| r.kind == k).map(|r| (r.params.lambda, r.ratio)).collect(),
        });
    }
    d.tables.push(("report.csv".into(), report_table(&merged, hash)));
    d.plots.push(("report.svg".into(), plot));
    d.results = json!({ "inputs": inputs, "report_count": merged.len() });
    d.reports = merged.into_iter().map(|(source, report)| TaggedReport { source, report }).collect();
    Ok(d)
}
