//! Weighted resolvent estimates, sharp constants and parameter sweeps.
//!
//! Every estimate is reported as a ratio `LHS / RHS` with both sides evaluated from
//! per-mode solutions; the constants themselves are never assumed.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MaghelmError, Result};
use crate::fem::best_constant;
use crate::model::{validate_spec, EstimateReport, ModeIndex, ProblemSpec, RadialField, RadialMesh, SolverKind};
use crate::norms::{ah_dual, ah_norm, f_fields, gradient_split, log_slope, phase_shifted_gradient, u_fields, weighted_l2};
use crate::potentials::{angular_indices, check_hypotheses, kinetic_index_sq, HypothesisReport, PotentialKind, PotentialSpec};
use crate::quadrature::gauss_legendre;
use crate::radial_solver::{effective_index, resolve_on, solve_mode_fd, EffectiveRadialOp, ModeSolution};
use crate::source::{harmonic, SourceSpec};

/// Which inequality to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    /// `∫|∇_A(e^{∓i√λ|x|}u)|² ≤ C∫|x|²|f|²` for `ε < λ`.
    Thm1Alpha0,
    /// `∫|∇_A u|² ≤ C∫|x|²|f|²` for `λ ≤ ε`.
    Thm1LargeEps,
    /// `∫|u|²/|x|² ≤ C∫|x|²|f|²`.
    Bp,
    /// `sup_{R≥1} R∫_{|x|≥R}|∇_A(e^{∓i√λ|x|}u)|² ≤ C(∫|x|³|f|² + N₁(f)²)`.
    Src,
    /// `λ|||u|||₁² + |||∇_A u|||₁² + ∫|∇^⊥u|²/|x| ≤ C(1+ε)N₁(f)²`.
    Morrey,
    /// `sup_{R≥1} ∫_{|x|=R}|u|² + (ε/√λ)∫_{|x|=R}|x||u|² ≤ C(∫(1+ε|x|)|x|³|f|² + (1+ε)N₁(f)²)`.
    Surface,
    /// `∫|u|²ω^{1/2}/|x| ≤ C∫|f|²|x|/ω^{1/2}`.
    WeightedW1,
    /// `sup_{R≥1} ∫_{R≤|x|≤2R}|∇|u|²| ≤ C(R₀³ + min(R₀,1))^{1/2}(min(R₀,1)/λ)^{1/2}∫|f|²`.
    GradAbs2,
}

impl EstimateKind {
    pub const ALL: [EstimateKind; 8] = [
        EstimateKind::Thm1Alpha0,
        EstimateKind::Thm1LargeEps,
        EstimateKind::Bp,
        EstimateKind::Src,
        EstimateKind::Morrey,
        EstimateKind::Surface,
        EstimateKind::WeightedW1,
        EstimateKind::GradAbs2,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimateKind::Thm1Alpha0 => "thm1_alpha0",
            EstimateKind::Thm1LargeEps => "thm1_large_eps",
            EstimateKind::Bp => "bp",
            EstimateKind::Src => "src",
            EstimateKind::Morrey => "morrey",
            EstimateKind::Surface => "surface",
            EstimateKind::WeightedW1 => "weighted_w1",
            EstimateKind::GradAbs2 => "grad_abs2",
        }
    }
}

/// A radial weight `ω` for the weighted estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SobolevWeight {
    /// `ω = |x|^{−2β}`.
    InversePower { beta: f64 },
    /// `ω ≡ 0`.
    Zero,
}

impl SobolevWeight {
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            SobolevWeight::InversePower { beta } => r.powf(-2.0 * beta),
            SobolevWeight::Zero => 0.0,
        }
    }

    fn validate(&self) -> Result<f64> {
        match *self {
            SobolevWeight::InversePower { beta } if beta.is_finite() => Ok(beta),
            SobolevWeight::InversePower { beta } => Err(MaghelmError::DegenerateWeight(format!("beta = {beta}"))),
            SobolevWeight::Zero => Err(MaghelmError::DegenerateWeight("omega vanishes identically".into())),
        }
    }
}

/// Per-kind inputs beyond the problem itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateExtras {
    /// Support radius `R₀` of the source for `grad_abs2`.
    pub r0: f64,
    /// Lower spectral threshold `λ₀` for `src`, `surface`, `morrey` and `grad_abs2`.
    pub lambda0: f64,
    pub weight: Option<SobolevWeight>,
    /// Precomputed hypothesis constants; computed on demand when absent.
    #[serde(skip)]
    pub hypotheses: Option<HypothesisReport>,
}

impl Default for EstimateExtras {
    fn default() -> Self {
        EstimateExtras { r0: 2.0, lambda0: 0.0, weight: None, hypotheses: None }
    }
}

/// A `(λ, ε)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub lambdas: Vec<f64>,
    pub epsilons: Vec<f64>,
}

impl SweepGrid {
    /// Grid points in row-major `(λ, ε)` order.
    pub fn points(&self) -> Result<Vec<(f64, f64)>> {
        if self.lambdas.is_empty() || self.epsilons.is_empty() {
            return Err(MaghelmError::EmptyGrid);
        }
        Ok(self.lambdas.iter().flat_map(|&l| self.epsilons.iter().map(move |&e| (l, e))).collect())
    }
}

/// Reports over a grid with their summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<(f64, f64)>,
    pub reports: Vec<EstimateReport>,
    pub max_ratio: f64,
    /// `max ratio / min ratio`.
    pub dispersion: f64,
    /// Least-squares slope of `log ratio` against `log λ`.
    pub fit_exponent: f64,
    /// Per-point convergence flags (always true for direct evaluations).
    pub converged: Vec<bool>,
}

impl SweepResult {
    fn from_reports(points: Vec<(f64, f64)>, reports: Vec<EstimateReport>, converged: Vec<bool>) -> Self {
        let ratios: Vec<f64> = reports.iter().map(|r| r.ratio).collect();
        let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let lambdas: Vec<f64> = points.iter().map(|p| p.0).collect();
        let fit_exponent = if lambdas.iter().all(|&l| l > 0.0) && ratios.iter().all(|&r| r > 0.0) {
            log_slope(&lambdas, &ratios)
        } else {
            f64::NAN
        };
        SweepResult { points, reports, max_ratio, dispersion: max_ratio / min_ratio, fit_exponent, converged }
    }
}

fn hypotheses(spec: &PotentialSpec, problem: &ProblemSpec, mesh: &RadialMesh, extras: &EstimateExtras) -> Result<HypothesisReport> {
    match &extras.hypotheses {
        Some(h) => Ok(h.clone()),
        None => check_hypotheses(spec, mesh, problem.mode_cutoff),
    }
}

fn violated(msg: String) -> MaghelmError {
    MaghelmError::HypothesisViolated(msg)
}

fn require_h1_h2(h: &HypothesisReport) -> Result<()> {
    if h.satisfied {
        return Ok(());
    }
    Err(violated(format!(
        "(H1)/(H2): A_V + 2 A_B = {:.6} (need < 1), stable = {}",
        h.a_v + 2.0 * h.a_b,
        h.stable
    )))
}

fn require_h3(h: &HypothesisReport) -> Result<()> {
    if h.h3_ok {
        return Ok(());
    }
    let r = h.h3_violation_radius.unwrap_or(f64::NAN);
    Err(violated(format!("(H3) violated at r = {r}")))
}

fn require_threshold(problem: &ProblemSpec, lambda0: f64) -> Result<()> {
    if problem.lambda > 0.0 && problem.lambda >= lambda0 {
        Ok(())
    } else {
        Err(violated(format!("need lambda >= lambda0 = {lambda0} and lambda > 0, got {}", problem.lambda)))
    }
}

fn check_preconditions(
    kind: EstimateKind,
    f: &SourceSpec,
    problem: &ProblemSpec,
    h: &HypothesisReport,
    extras: &EstimateExtras,
) -> Result<()> {
    match kind {
        EstimateKind::Thm1Alpha0 => {
            require_h1_h2(h)?;
            if !(problem.epsilon < problem.lambda) {
                return Err(violated(format!(
                    "thm1_alpha0 needs epsilon < lambda, got epsilon = {}, lambda = {}",
                    problem.epsilon, problem.lambda
                )));
            }
        }
        EstimateKind::Thm1LargeEps => {
            if !(h.nu < 1.0) {
                return Err(violated(format!("(H1): nu = {:.6} (need < 1)", h.nu)));
            }
            if !(problem.lambda <= problem.epsilon) {
                return Err(violated(format!(
                    "thm1_large_eps needs lambda <= epsilon, got lambda = {}, epsilon = {}",
                    problem.lambda, problem.epsilon
                )));
            }
        }
        EstimateKind::Bp | EstimateKind::WeightedW1 => require_h1_h2(h)?,
        EstimateKind::Src | EstimateKind::Morrey | EstimateKind::Surface => {
            require_h1_h2(h)?;
            require_h3(h)?;
            require_threshold(problem, extras.lambda0)?;
        }
        EstimateKind::GradAbs2 => {
            require_h1_h2(h)?;
            require_h3(h)?;
            require_threshold(problem, extras.lambda0)?;
            let support = f.support_radius();
            if !(extras.r0 > 0.0) || support > extras.r0 * (1.0 + 1e-12) {
                return Err(violated(format!(
                    "supp f (radius {support}) not inside B(0, R0 = {})",
                    extras.r0
                )));
            }
        }
    }
    Ok(())
}

/// Verifies one estimate on the default mesh of `problem`.
pub fn verify_estimate(
    kind: EstimateKind,
    spec: &PotentialSpec,
    f: &SourceSpec,
    problem: &ProblemSpec,
    extras: &EstimateExtras,
) -> Result<EstimateReport> {
    let mesh = Arc::new(RadialMesh::default_for(&validate_spec(*problem)?)?);
    verify_estimate_on(kind, spec, f, problem, &mesh, extras)
}

/// Verifies one estimate on an explicit mesh.
pub fn verify_estimate_on(
    kind: EstimateKind,
    spec: &PotentialSpec,
    f: &SourceSpec,
    problem: &ProblemSpec,
    mesh: &Arc<RadialMesh>,
    extras: &EstimateExtras,
) -> Result<EstimateReport> {
    validate_spec(*problem)?;
    let h = hypotheses(spec, problem, mesh, extras)?;
    check_preconditions(kind, f, problem, &h, extras)?;
    let weight = match kind {
        EstimateKind::WeightedW1 => {
            let w = extras.weight.ok_or_else(|| MaghelmError::InvalidParameter("weighted_w1 needs a weight".into()))?;
            w.validate()?;
            Some(w)
        }
        _ => None,
    };
    let sols = resolve_on(spec, f, problem, mesh)?;
    let (lhs, rhs, notes) = evaluate(kind, &sols, problem, extras, weight)?;
    let notes = if let Some(w) = weight {
        let c = sobolev_constant(spec, &w, mesh, problem.mode_cutoff)?;
        format!("{notes}; c(omega) = {c:.6e}")
    } else {
        notes
    };
    Ok(EstimateReport::new(kind.as_str(), lhs, rhs, *problem, mesh.len(), SolverKind::Fd)?.with_notes(notes))
}

/// `(R, R·∫_{|x|≥R} |G|²)` over mesh radii `R ≥ 1`, with `G = ∇_A(e^{∓i√λ|x|}u)` when
/// `shifted` and `G = ∇_A u` otherwise.
pub fn weighted_tail_profile(sols: &[ModeSolution], lambda: f64, shifted: bool) -> Result<Vec<(f64, f64)>> {
    if shifted && !(lambda > 0.0) {
        return Err(MaghelmError::InvalidParameter("phase-shifted gradient needs lambda > 0".into()));
    }
    let Some(first) = sols.first() else { return Ok(Vec::new()) };
    let mesh = first.mesh();
    let n = mesh.len();
    let k = if shifted { lambda.sqrt() } else { 0.0 };
    let mut dens = vec![0.0; n];
    for s in sols {
        let rho = s.spec.d as f64 - 1.0;
        let shift = Complex64::new(0.0, k * s.spec.sign.factor());
        for (i, d) in dens.iter_mut().enumerate() {
            let r = mesh.r(i);
            let radial = (s.du.values[i] - shift * s.u.values[i]).norm_sqr();
            *d += (radial + s.op.lambda_ang / (r * r) * s.u.values[i].norm_sqr()) * r.powf(rho);
        }
    }
    let w = mesh.weights();
    let mut tail = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n).rev() {
        acc += w[i] * dens[i];
        tail[i] = acc;
    }
    Ok((0..n).filter(|&i| mesh.r(i) >= 1.0).map(|i| (mesh.r(i), mesh.r(i) * tail[i])).collect())
}

fn gradient_fields(sols: &[ModeSolution]) -> Result<Vec<RadialField>> {
    let mut out = Vec::with_capacity(2 * sols.len());
    for s in sols {
        out.push(s.du.to_plain());
        let u = s.u.to_plain();
        let scale = s.op.lambda_ang.max(0.0).sqrt();
        let vals = u.values.iter().zip(u.mesh.nodes()).map(|(v, &r)| v * (scale / r)).collect();
        out.push(RadialField::new(u.mesh.clone(), vals, s.mode, false)?);
    }
    Ok(out)
}

fn tangential_over_r(sols: &[ModeSolution]) -> f64 {
    sols.iter()
        .map(|s| {
            let mesh = s.mesh();
            let rho = s.spec.d as f64 - 1.0;
            mesh.integrate_with(|i| s.op.lambda_ang * s.u.values[i].norm_sqr() * mesh.r(i).powf(rho - 3.0))
        })
        .sum()
}

fn surface_sup(sols: &[ModeSolution], problem: &ProblemSpec) -> f64 {
    let Some(first) = sols.first() else { return 0.0 };
    let mesh = first.mesh();
    let rho = problem.d as f64 - 1.0;
    let damp = problem.epsilon / problem.lambda.sqrt();
    (0..mesh.len())
        .filter(|&i| mesh.r(i) >= 1.0)
        .map(|i| {
            let r = mesh.r(i);
            let s: f64 = sols.iter().map(|s| s.u.values[i].norm_sqr()).sum();
            s * r.powf(rho) * (1.0 + damp * r)
        })
        .fold(0.0, f64::max)
}

type Sides = (f64, f64, String);

fn evaluate(
    kind: EstimateKind,
    sols: &[ModeSolution],
    problem: &ProblemSpec,
    extras: &EstimateExtras,
    weight: Option<SobolevWeight>,
) -> Result<Sides> {
    let us = u_fields(sols);
    let fs = f_fields(sols);
    let lam = problem.lambda;
    let eps = problem.epsilon;
    Ok(match kind {
        EstimateKind::Thm1Alpha0 => (phase_shifted_gradient(sols, lam)?, weighted_l2(&fs, 2.0), String::new()),
        EstimateKind::Thm1LargeEps => {
            let (radial, tangential) = gradient_split(sols);
            (radial + tangential, weighted_l2(&fs, 2.0), String::new())
        }
        EstimateKind::Bp => (weighted_l2(&us, -2.0), weighted_l2(&fs, 2.0), String::new()),
        EstimateKind::Src => {
            let profile = weighted_tail_profile(sols, lam, true)?;
            let (at, lhs) = profile.iter().copied().fold((f64::NAN, 0.0), |b, p| if p.1 > b.1 { p } else { b });
            let n1 = ah_dual(&fs, 1.0);
            (lhs, weighted_l2(&fs, 3.0) + n1 * n1, format!("sup attained at R = {at}"))
        }
        EstimateKind::Morrey => {
            let grads = gradient_fields(sols)?;
            let a = lam * ah_norm(&us, 1.0).powi(2);
            let b = ah_norm(&grads, 1.0).powi(2);
            let c = tangential_over_r(sols);
            let n1 = ah_dual(&fs, 1.0);
            (a + b + c, (1.0 + eps) * n1 * n1, format!("terms: {a:.6e}, {b:.6e}, {c:.6e}"))
        }
        EstimateKind::Surface => {
            let n1 = ah_dual(&fs, 1.0);
            let rhs = weighted_l2(&fs, 3.0) + eps * weighted_l2(&fs, 4.0) + (1.0 + eps) * n1 * n1;
            (surface_sup(sols, problem), rhs, String::new())
        }
        EstimateKind::WeightedW1 => {
            let w = weight.expect("weight validated");
            let beta = w.validate()?;
            let lhs = weighted_l2(&us, -beta - 1.0);
            let rhs = weighted_l2(&fs, 1.0 + beta);
            let (r_weighted, rdual) = interpolation_ratios(sols, beta);
            (lhs, rhs, format!("ratio (weighted) = {r_weighted:.6e}, ratio (dual) = {rdual:.6e}"))
        }
        EstimateKind::GradAbs2 => {
            let (lhs, at) = grad_abs2_shells(sols)?;
            let r0 = extras.r0;
            let m = r0.min(1.0);
            let rhs = (r0.powi(3) + m).sqrt() * (m / lam).sqrt() * weighted_l2(&fs, 0.0);
            (lhs, rhs, format!("sup attained at R = {at}"))
        }
    })
}

/// The two endpoint ratios `∫|u|²ω / ∫|x|²|f|²` and `∫|u|²/|x|² / ∫|f|²/ω` that the
/// weighted estimate interpolates, for `ω = |x|^{−2β}`.
pub fn interpolation_ratios(sols: &[ModeSolution], beta: f64) -> (f64, f64) {
    let us = u_fields(sols);
    let fs = f_fields(sols);
    let r_weighted = weighted_l2(&us, -2.0 * beta) / weighted_l2(&fs, 2.0);
    let rdual = weighted_l2(&us, -2.0) / weighted_l2(&fs, 2.0 * beta);
    (r_weighted, rdual)
}

/// Weighted estimate `∫|u|²ω^{1/2}/|x| ≤ C∫|f|²|x|/ω^{1/2}` on the default mesh.
pub fn verify_w1(spec: &PotentialSpec, weight: SobolevWeight, f: &SourceSpec, problem: &ProblemSpec) -> Result<EstimateReport> {
    let extras = EstimateExtras { weight: Some(weight), ..EstimateExtras::default() };
    verify_estimate(EstimateKind::WeightedW1, spec, f, problem, &extras)
}

/// Discrete best constant `c(ω)` of `∫|g|²ω ≤ c(ω)∫|∇_A g|²`, maximized over modes.
///
/// Fails when the constant grows by more than 10% under one mesh refinement.
pub fn sobolev_constant(spec: &PotentialSpec, weight: &SobolevWeight, mesh: &RadialMesh, cutoff: u32) -> Result<f64> {
    weight.validate()?;
    let w = *weight;
    let eval = |m: &RadialMesh| -> Result<f64> {
        let mut best = 0.0f64;
        for idx in angular_indices(spec.d, cutoff) {
            let nu_sq = kinetic_index_sq(spec, idx)?;
            if nu_sq == 0.0 {
                continue;
            }
            best = best.max(best_constant(m, nu_sq, &|r| w.value(r))?.value);
        }
        Ok(best)
    };
    let coarse = eval(mesh)?;
    let fine = eval(&mesh.refined())?;
    if !(fine.is_finite() && fine <= 1.1 * coarse) {
        return Err(MaghelmError::DegenerateWeight(format!(
            "not a Sobolev weight at discrete level: c(omega) {coarse:.6e} -> {fine:.6e} under refinement"
        )));
    }
    Ok(fine)
}

/// Geometric mesh on `[10⁻²⁰, 10²⁰]` wide enough to resolve scale-invariant quotients.
pub fn hardy_mesh() -> Result<RadialMesh> {
    RadialMesh::geometric(1e-20, 1e20, 4001)
}

/// Best Hardy constant `max ∫|u|²/|x|² ÷ ∫|∇_A u|²` over the discrete test space on `mesh`.
pub fn hardy_constant(spec: &PotentialSpec, d: u32, mesh: &RadialMesh, mode_cutoff: u32) -> Result<f64> {
    if d != 2 && d != 3 {
        return Err(MaghelmError::UnsupportedDimension(d));
    }
    if spec.d != d {
        return Err(MaghelmError::InvalidParameter(format!("potential dimension {} differs from {d}", spec.d)));
    }
    if d == 2 && !matches!(spec.kind, PotentialKind::AharonovBohm { .. }) {
        return Err(MaghelmError::NoHardyInequality("d = 2 without Aharonov-Bohm flux".into()));
    }
    let mut best = 0.0f64;
    for idx in angular_indices(d, mode_cutoff) {
        let nu_sq = kinetic_index_sq(spec, idx)?;
        if nu_sq < 1e-24 {
            return Err(MaghelmError::NoHardyInequality(format!("mode {idx} has vanishing kinetic index")));
        }
        best = best.max(best_constant(mesh, nu_sq, &|r| 1.0 / (r * r))?.value);
    }
    Ok(best)
}

/// Runs one estimate over a `(λ, ε)` grid in parallel; results keep grid order.
pub fn estimate_sweep(
    kind: EstimateKind,
    spec: &PotentialSpec,
    f: &SourceSpec,
    base: &ProblemSpec,
    grid: &SweepGrid,
    extras: &EstimateExtras,
) -> Result<SweepResult> {
    let points = grid.points()?;
    let mesh = Arc::new(RadialMesh::default_for(&validate_spec(*base)?)?);
    let extras = EstimateExtras { hypotheses: Some(hypotheses(spec, base, &mesh, extras)?), ..extras.clone() };
    let reports = points
        .par_iter()
        .map(|&(lambda, epsilon)| {
            let problem = ProblemSpec { lambda, epsilon, ..*base };
            verify_estimate_on(kind, spec, f, &problem, &mesh, &extras)
        })
        .collect::<Result<Vec<_>>>()?;
    let converged = vec![true; reports.len()];
    Ok(SweepResult::from_reports(points, reports, converged))
}

/// Power-iteration controls for [`operator_norm_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions { max_iter: 30, tol: 1e-4 }
    }
}

struct ModeOperator {
    op: EffectiveRadialOp,
    mode: ModeIndex,
}

fn inner(mesh: &RadialMesh, rho: f64, a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let w = mesh.weights();
    (0..a.len()).map(|i| a[i] * b[i].conj() * (w[i] * mesh.r(i).powf(rho))).sum()
}

/// `g ↦ |x|⁻¹R(z)(|x|⁻¹g)` on one mode, with `z` taken from `problem`.
fn apply_weighted_resolvent(
    m: &ModeOperator,
    mesh: &Arc<RadialMesh>,
    problem: &ProblemSpec,
    g: &[Complex64],
) -> Result<Vec<Complex64>> {
    let p = problem.half_weight();
    let vals = g.iter().zip(mesh.nodes()).map(|(v, &r)| v * r.powf(p - 1.0)).collect();
    let rhs = RadialField::new(mesh.clone(), vals, m.mode, true)?;
    let sol = solve_mode_fd(&m.op, &rhs, problem)?;
    Ok(sol.u.values.iter().zip(mesh.nodes()).map(|(v, &r)| v / r).collect())
}

/// Largest singular value of the weighted resolvent on one mode by power iteration on
/// `T*T`, where `T*` uses the conjugate branch. Returns `(norm, vector, converged)`.
fn mode_norm(
    m: &ModeOperator,
    mesh: &Arc<RadialMesh>,
    problem: &ProblemSpec,
    start: &[Complex64],
    opts: PowerOptions,
) -> Result<(f64, Vec<Complex64>, bool)> {
    let rho = problem.d as f64 - 1.0;
    let adjoint = problem.with_sign(problem.sign.flipped());
    let normalize = |x: &mut Vec<Complex64>| {
        let n = inner(mesh, rho, x, x).re.sqrt();
        if n > 0.0 {
            x.iter_mut().for_each(|v| *v /= n);
        }
        n
    };
    let mut x = start.to_vec();
    normalize(&mut x);
    let mut prev = f64::NAN;
    let mut sigma = 0.0;
    for _ in 0..opts.max_iter {
        let tx = apply_weighted_resolvent(m, mesh, problem, &x)?;
        let mut y = apply_weighted_resolvent(m, mesh, &adjoint, &tx)?;
        sigma = inner(mesh, rho, &tx, &tx).re.sqrt();
        normalize(&mut y);
        x = y;
        if (sigma - prev).abs() <= opts.tol * sigma {
            return Ok((sigma, x, true));
        }
        prev = sigma;
    }
    Ok((sigma, x, false))
}

/// Operator norm of `g ↦ |x|⁻¹R(λ±iε)(|x|⁻¹g)` at every grid point, maximized over modes.
///
/// Points run in grid order so each one warm-starts from the previous top vectors; modes
/// within a point run in parallel. Non-convergence is recorded, not fatal.
pub fn operator_norm_sweep(
    spec: &PotentialSpec,
    base: &ProblemSpec,
    grid: &SweepGrid,
    opts: PowerOptions,
) -> Result<SweepResult> {
    if opts.max_iter == 0 {
        return Err(MaghelmError::NoIterations);
    }
    let points = grid.points()?;
    let mesh = Arc::new(RadialMesh::default_for(&validate_spec(*base)?)?);
    let h = check_hypotheses(spec, &mesh, base.mode_cutoff)?;
    require_h1_h2(&h)?;
    let modes: Vec<ModeIndex> = angular_indices(base.d, base.mode_cutoff)
        .into_iter()
        .map(|index| ModeIndex { d: base.d, index, sub: 0, nu_eff: 0.0 })
        .collect();
    let mut starts: Vec<Vec<Complex64>> = vec![vec![Complex64::new(1.0, 0.0); mesh.len()]; modes.len()];
    let mut reports = Vec::with_capacity(points.len());
    let mut converged = Vec::with_capacity(points.len());
    for &(lambda, epsilon) in &points {
        let problem = validate_spec(ProblemSpec { lambda, epsilon, ..*base })?;
        let results = modes
            .par_iter()
            .zip(starts.par_iter())
            .map(|(&mode, start)| {
                let op = effective_index(spec, mode, &problem)?;
                let m = ModeOperator { mode: op.mode, op };
                mode_norm(&m, &mesh, &problem, start, opts)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut best = (0.0f64, 0usize);
        let mut all = true;
        for (j, (sigma, _, ok)) in results.iter().enumerate() {
            all &= ok;
            if *sigma > best.0 {
                best = (*sigma, j);
            }
        }
        let notes = format!("top mode index {}; power iteration converged: {all}", modes[best.1].index);
        starts = results.into_iter().map(|(_, v, _)| v).collect();
        reports.push(EstimateReport::new("bp_operator_norm", best.0, 1.0, problem, mesh.len(), SolverKind::Fd)?.with_notes(notes));
        converged.push(all);
    }
    Ok(SweepResult::from_reports(points, reports, converged))
}

/// Angular quadrature on the sphere: `(θ, φ, weight)` triples.
fn sphere_rule(d: u32, cutoff: u32) -> Vec<(f64, f64, f64)> {
    let l = cutoff as usize;
    if d == 2 {
        let n = 8 * l + 64;
        let w = 2.0 * std::f64::consts::PI / n as f64;
        return (0..n).map(|j| (j as f64 * w, 0.0, w)).collect();
    }
    let (x, wx) = gauss_legendre(2 * l + 16);
    let nphi = 4 * l + 32;
    let wphi = 2.0 * std::f64::consts::PI / nphi as f64;
    let mut out = Vec::with_capacity(x.len() * nphi);
    for (xi, wi) in x.iter().zip(&wx) {
        for j in 0..nphi {
            out.push((xi.acos(), j as f64 * wphi, wi * wphi));
        }
    }
    out
}

/// Harmonic values and `(∂_θ, ∂_φ/sin θ)` at each quadrature direction.
fn harmonic_table(d: u32, index: i32, sub: i32, rule: &[(f64, f64, f64)]) -> Vec<[Complex64; 3]> {
    let h = 1e-5;
    rule.iter()
        .map(|&(t, p, _)| {
            let y = harmonic(d, index, sub, t, p);
            let dt = (harmonic(d, index, sub, t + h, p) - harmonic(d, index, sub, t - h, p)) / (2.0 * h);
            let dp = if d == 3 {
                (harmonic(d, index, sub, t, p + h) - harmonic(d, index, sub, t, p - h)) / (2.0 * h * t.sin())
            } else {
                Complex64::new(0.0, 0.0)
            };
            [y, dt, dp]
        })
        .collect()
}

/// `sup_{R≥1, 2R≤r_max} ∫_{R≤|x|≤2R} |∇|u|²|` with the radius attaining it.
fn grad_abs2_shells(sols: &[ModeSolution]) -> Result<(f64, f64)> {
    let Some(first) = sols.first() else { return Ok((0.0, f64::NAN)) };
    let mesh = first.mesh();
    let d = first.spec.d;
    let rule = sphere_rule(d, first.spec.mode_cutoff);
    let tables: Vec<Vec<[Complex64; 3]>> =
        sols.iter().map(|s| harmonic_table(d, s.mode.index, s.mode.sub, &rule)).collect();
    let start = mesh.first_at_or_above(1.0);
    let rho = d as f64 - 1.0;
    let dens: Vec<f64> = (start..mesh.len())
        .into_par_iter()
        .map(|i| {
            let r = mesh.r(i);
            let mut total = 0.0;
            for (q, &(_, _, w)) in rule.iter().enumerate() {
                let (mut u, mut ur, mut ut, mut up) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
                for (s, tab) in sols.iter().zip(&tables) {
                    let [y, dt, dp] = tab[q];
                    u += s.u.values[i] * y;
                    ur += s.du.values[i] * y;
                    ut += s.u.values[i] * dt;
                    up += s.u.values[i] * dp;
                }
                let gr = 2.0 * (u.conj() * ur).re;
                let gt = 2.0 * (u.conj() * ut).re / r;
                let gp = 2.0 * (u.conj() * up).re / r;
                total += w * (gr * gr + gt * gt + gp * gp).sqrt();
            }
            total * r.powf(rho)
        })
        .collect();
    let radii = &mesh.nodes()[start..];
    let mut cum = vec![0.0; dens.len()];
    for j in 1..dens.len() {
        cum[j] = cum[j - 1] + 0.5 * (dens[j] + dens[j - 1]) * (radii[j] - radii[j - 1]);
    }
    let at = |x: f64| -> f64 {
        let j = radii.partition_point(|&r| r < x).clamp(1, radii.len() - 1);
        let t = (x - radii[j - 1]) / (radii[j] - radii[j - 1]);
        cum[j - 1] + t * (cum[j] - cum[j - 1])
    };
    let mut best = (0.0, f64::NAN);
    for (j, &r) in radii.iter().enumerate() {
        if 2.0 * r > mesh.r_max() {
            break;
        }
        let v = at(2.0 * r) - cum[j];
        if v > best.0 {
            best = (v, r);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::build_example;
    use crate::source::{HarmonicTerm, RadialProfile};
    use nalgebra::DMatrix;

    fn annulus() -> SourceSpec {
        SourceSpec::radial(RadialProfile::Annulus { inner: 1.0, outer: 2.0 })
    }

    fn free3() -> PotentialSpec {
        PotentialSpec::free(3)
    }

    fn ab(alpha: f64) -> PotentialSpec {
        build_example(PotentialKind::AharonovBohm { alpha }, 2).unwrap()
    }

    fn problem(lambda: f64, epsilon: f64) -> ProblemSpec {
        ProblemSpec::new(3, lambda, epsilon)
    }

    fn verify(kind: EstimateKind, spec: &PotentialSpec, f: &SourceSpec, p: &ProblemSpec) -> Result<EstimateReport> {
        verify_estimate(kind, spec, f, p, &EstimateExtras::default())
    }

    #[test]
    fn hardy_constant_free_three_dimensions() {
        let mesh = hardy_mesh().unwrap();
        let c = hardy_constant(&free3(), 3, &mesh, 2).unwrap();
        assert!((3.96..=4.0).contains(&c), "{c}");
        let coarse = RadialMesh::geometric(1e-20, 1e20, 1001).unwrap();
        let c0 = hardy_constant(&free3(), 3, &coarse, 2).unwrap();
        let c1 = hardy_constant(&free3(), 3, &coarse.refined(), 2).unwrap();
        assert!(c0 <= c1 * (1.0 + 1e-9) && c1 <= 4.0, "{c0} {c1}");
    }

    /// Largest generalized eigenvalue of the Galerkin pair by dense symmetric reduction.
    fn dense_top(mesh: &RadialMesh, nu_sq: f64) -> f64 {
        let k = crate::fem::magnetic_dirichlet(mesh, nu_sq);
        let m = crate::fem::weighted_mass(mesh, &|r| 1.0 / (r * r));
        let dense = |t: &crate::linalg::SymTridiag| {
            let n = t.len();
            let mut a = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                let col = t.mul(&e);
                for j in 0..n {
                    a[(j, i)] = col[j];
                }
            }
            a
        };
        let (kd, md) = (dense(&k), dense(&m));
        let l = kd.cholesky().unwrap().l();
        let li = l.clone().try_inverse().unwrap();
        let s = &li * md * li.transpose();
        s.symmetric_eigen().eigenvalues.max()
    }

    #[test]
    fn hardy_constant_aharonov_bohm_matches_dense_oracle() {
        let mesh = RadialMesh::geometric(1e-12, 1e12, 401).unwrap();
        let spec = ab(0.5);
        let c = hardy_constant(&spec, 2, &mesh, 3).unwrap();
        let oracle = (-3..=3)
            .map(|m| dense_top(&mesh, (m as f64 + 0.5).powi(2)))
            .fold(0.0, f64::max);
        assert!((c - oracle).abs() <= 0.05 * oracle, "{c} vs {oracle}");
        let wide = hardy_constant(&spec, 2, &hardy_mesh().unwrap(), 3).unwrap();
        assert!(wide < 4.0 && wide > 3.9, "{wide}");
    }

    #[test]
    fn integer_flux_and_plain_plane_have_no_hardy_inequality() {
        let mesh = RadialMesh::geometric(1e-6, 1e6, 200).unwrap();
        for spec in [ab(1.0), ab(0.0), PotentialSpec::free(2)] {
            let err = hardy_constant(&spec, 2, &mesh, 2).unwrap_err();
            assert!(matches!(err, MaghelmError::NoHardyInequality(_)), "{err}");
        }
    }

    #[test]
    fn vanishing_source_gives_vanishing_left_sides() {
        let zero = SourceSpec::radial(RadialProfile::Zero);
        let err = verify(EstimateKind::Bp, &free3(), &zero, &problem(1.0, 0.1)).unwrap_err();
        // The right side vanishes with f, so the ratio is undefined and rejected.
        assert!(matches!(err, MaghelmError::InvalidParameter(_)));
        let mesh = Arc::new(RadialMesh::default_for(&problem(1.0, 0.1)).unwrap());
        let sols = resolve_on(&free3(), &zero, &problem(1.0, 0.1), &mesh).unwrap();
        let (lhs, _, _) = evaluate(EstimateKind::Bp, &sols, &problem(1.0, 0.1), &EstimateExtras::default(), None).unwrap();
        assert_eq!(lhs, 0.0);
        assert!(weighted_tail_profile(&sols, 1.0, true).unwrap().iter().all(|p| p.1 == 0.0));
    }

    #[test]
    fn every_kind_produces_a_finite_report_on_the_free_case() {
        let f = annulus();
        let extras = EstimateExtras { weight: Some(SobolevWeight::InversePower { beta: 0.75 }), ..Default::default() };
        for kind in EstimateKind::ALL {
            let p = if kind == EstimateKind::Thm1LargeEps { problem(0.5, 1.0) } else { problem(1.0, 0.05) };
            let rep = verify_estimate(kind, &free3(), &f, &p, &extras).unwrap();
            assert!(rep.ratio.is_finite() && rep.ratio > 0.0, "{kind:?} {rep:?}");
            assert_eq!(rep.kind, kind.as_str());
        }
    }

    #[test]
    fn large_eps_requires_lambda_below_epsilon() {
        let err = verify(EstimateKind::Thm1LargeEps, &free3(), &annulus(), &problem(2.0, 1.0)).unwrap_err();
        assert!(err.to_string().contains("lambda <= epsilon"), "{err}");
        let err = verify(EstimateKind::Thm1Alpha0, &free3(), &annulus(), &problem(1.0, 2.0)).unwrap_err();
        assert!(err.to_string().contains("epsilon < lambda"), "{err}");
    }

    #[test]
    fn src_rejects_slow_decay() {
        let spec = build_example(PotentialKind::CoulombType { v_inf: -0.5, alpha_exp: 1.5 }, 3).unwrap();
        let err = verify(EstimateKind::Src, &spec, &annulus(), &problem(1.0, 0.01)).unwrap_err();
        assert!(err.to_string().contains("(H3) violated at r = "), "{err}");
    }

    #[test]
    fn grad_abs2_requires_source_inside_ball() {
        let extras = EstimateExtras { r0: 1.5, ..Default::default() };
        let err = verify_estimate(EstimateKind::GradAbs2, &free3(), &annulus(), &problem(1.0, 0.01), &extras).unwrap_err();
        assert!(err.to_string().contains("supp f"), "{err}");
    }

    #[test]
    fn grad_abs2_sees_angular_structure() {
        let f = SourceSpec::Harmonic {
            terms: vec![
                HarmonicTerm { index: 0, sub: 0, coefficient: 1.0, profile: RadialProfile::Annulus { inner: 1.0, outer: 2.0 } },
                HarmonicTerm { index: 1, sub: 0, coefficient: 0.7, profile: RadialProfile::Annulus { inner: 1.0, outer: 2.0 } },
            ],
        };
        let p = problem(1.0, 0.05).with_cutoff(2);
        let rep = verify_estimate(EstimateKind::GradAbs2, &free3(), &f, &p, &EstimateExtras::default()).unwrap();
        assert!(rep.ratio.is_finite() && rep.lhs > 0.0);
    }

    #[test]
    fn grad_abs2_radial_case_matches_direct_derivative() {
        let p = problem(1.0, 0.05);
        let mesh = Arc::new(RadialMesh::default_for(&p).unwrap());
        let sols = resolve_on(&free3(), &annulus(), &p, &mesh).unwrap();
        let (lhs, at) = grad_abs2_shells(&sols).unwrap();
        // Radial u: |∇|u|²| = |∂_r|u|²| and the sphere contributes 4π r² · Y₀² = r².
        let s = &sols[0];
        let (i0, i1) = (mesh.index_of(at).unwrap(), mesh.first_at_or_above(2.0 * at));
        let dens: Vec<f64> = (0..mesh.len())
            .map(|i| (2.0 * (s.u.values[i].conj() * s.du.values[i]).re).abs() * mesh.r(i).powi(2) / (4.0 * std::f64::consts::PI) * 4.0 * std::f64::consts::PI)
            .collect();
        let direct: f64 = (i0..i1).map(|i| 0.5 * (dens[i] + dens[i + 1]) * mesh.spacing(i)).sum();
        assert!((lhs - direct).abs() <= 1e-6 * direct, "{lhs} vs {direct}");
    }

    #[test]
    fn w1_with_inverse_square_weight_reduces_to_bp() {
        let p = problem(1.0, 0.01);
        let bp = verify(EstimateKind::Bp, &free3(), &annulus(), &p).unwrap();
        let w1 = verify_w1(&free3(), SobolevWeight::InversePower { beta: 1.0 }, &annulus(), &p).unwrap();
        assert!((bp.ratio - w1.ratio).abs() <= 1e-10 * bp.ratio, "{} vs {}", bp.ratio, w1.ratio);
    }

    #[test]
    fn zero_weight_is_rejected() {
        let err = verify_w1(&free3(), SobolevWeight::Zero, &annulus(), &problem(1.0, 0.01)).unwrap_err();
        assert!(matches!(err, MaghelmError::DegenerateWeight(_)));
    }

    #[test]
    fn w1_ratios_finite_over_lambda_grid() {
        for lambda in [0.1, 1.0, 10.0] {
            let rep = verify_w1(&free3(), SobolevWeight::InversePower { beta: 0.75 }, &annulus(), &problem(lambda, 0.01)).unwrap();
            assert!(rep.ratio.is_finite() && rep.ratio > 0.0);
            assert!(rep.notes.contains("c(omega)"));
        }
    }

    #[test]
    fn bp_ratio_grows_with_inverse_square_strength() {
        let p = problem(1.0, 0.01);
        let mut prev = 0.0;
        for nu1 in [0.0, 0.1, 0.2, 0.24] {
            let spec = build_example(PotentialKind::InverseSquareV { nu1 }, 3).unwrap();
            let rep = verify(EstimateKind::Bp, &spec, &annulus(), &p).unwrap();
            assert!(rep.ratio >= prev, "nu1 = {nu1}: {} < {prev}", rep.ratio);
            prev = rep.ratio;
        }
    }

    #[test]
    fn ratios_are_stable_when_the_box_doubles() {
        for kind in [EstimateKind::Bp, EstimateKind::Thm1Alpha0, EstimateKind::Morrey] {
            let a = verify(kind, &free3(), &annulus(), &problem(1.0, 0.1).with_truncation(1e-3, 64.0)).unwrap();
            let b = verify(kind, &free3(), &annulus(), &problem(1.0, 0.1).with_truncation(1e-3, 128.0)).unwrap();
            assert!((a.ratio - b.ratio).abs() <= 0.05 * a.ratio, "{kind:?}: {} vs {}", a.ratio, b.ratio);
        }
    }

    #[test]
    fn sweep_keeps_grid_order_and_reports_summary() {
        let grid = SweepGrid { lambdas: vec![0.5, 2.0], epsilons: vec![0.1, 0.01] };
        let res = estimate_sweep(EstimateKind::Bp, &free3(), &annulus(), &problem(1.0, 0.1), &grid, &EstimateExtras::default()).unwrap();
        assert_eq!(res.points, vec![(0.5, 0.1), (0.5, 0.01), (2.0, 0.1), (2.0, 0.01)]);
        for (pt, rep) in res.points.iter().zip(&res.reports) {
            assert_eq!((rep.params.lambda, rep.params.epsilon), *pt);
        }
        let max = res.reports.iter().map(|r| r.ratio).fold(0.0, f64::max);
        assert_eq!(res.max_ratio, max);
        let empty = SweepGrid { lambdas: vec![], epsilons: vec![0.1] };
        assert_eq!(
            estimate_sweep(EstimateKind::Bp, &free3(), &annulus(), &problem(1.0, 0.1), &empty, &EstimateExtras::default()).unwrap_err(),
            MaghelmError::EmptyGrid
        );
    }

    #[test]
    fn operator_norm_needs_iterations() {
        let grid = SweepGrid { lambdas: vec![1.0], epsilons: vec![0.01] };
        let err = operator_norm_sweep(&free3(), &problem(1.0, 0.01), &grid, PowerOptions { max_iter: 0, tol: 1e-4 }).unwrap_err();
        assert_eq!(err, MaghelmError::NoIterations);
    }

    #[test]
    fn operator_norm_bounds_every_bp_ratio() {
        let p = problem(1.0, 0.05).with_cutoff(0);
        let grid = SweepGrid { lambdas: vec![1.0], epsilons: vec![0.05] };
        let res = operator_norm_sweep(&free3(), &p, &grid, PowerOptions::default()).unwrap();
        let norm = res.reports[0].lhs;
        // ‖r⁻¹R r⁻¹‖² bounds ∫|u|²/r² ÷ ∫r²|f|² for every f.
        let bp = verify(EstimateKind::Bp, &free3(), &annulus(), &p).unwrap();
        assert!(bp.ratio <= norm * norm * 1.01, "{} vs {}", bp.ratio, norm * norm);
    }

    #[test]
    fn operator_norm_decreases_with_damping() {
        let p = problem(0.5, 1.0).with_cutoff(1);
        let grid = SweepGrid { lambdas: vec![0.5], epsilons: vec![1.0, 2.0, 4.0, 8.0] };
        let res = operator_norm_sweep(&free3(), &p, &grid, PowerOptions::default()).unwrap();
        for w in res.reports.windows(2) {
            assert!(w[1].lhs < w[0].lhs, "{} !< {}", w[1].lhs, w[0].lhs);
        }
    }

    #[test]
    fn interpolation_bound_holds_on_test_cases() {
        for (lambda, beta) in [(1.0, 0.75), (4.0, 0.6), (0.25, 0.9)] {
            let p = problem(lambda, 0.01);
            let mesh = Arc::new(RadialMesh::default_for(&p).unwrap());
            let sols = resolve_on(&free3(), &annulus(), &p, &mesh).unwrap();
            let (r_weighted, rdual) = interpolation_ratios(&sols, beta);
            let rep = verify_w1(&free3(), SobolevWeight::InversePower { beta }, &annulus(), &p).unwrap();
            assert!(rep.ratio <= (r_weighted * rdual).sqrt() * 1.05, "{} vs {}", rep.ratio, (r_weighted * rdual).sqrt());
        }
    }
}
