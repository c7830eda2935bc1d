//! Per-mode radial resolvent: a symmetric finite-difference solver with an exact
//! outgoing Robin condition, and a Hankel–Green kernel used as an oracle.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel::{bessel_j, bessel_j_prime, hankel1, hankel1_log_derivative, hankel1_prime};
use crate::error::{MaghelmError, Result};
use crate::linalg::solve_complex_tridiag;
use crate::model::{validate_spec, ModeIndex, ProblemSpec, RadialField, RadialMesh, Sign, SolverKind};
use crate::potentials::{kinetic_index_sq, PotentialKind, PotentialSpec, RadialFunction};
use crate::source::{RadialProfile, SourceSpec};

/// Reduced per-mode operator `w″ − (ν² − 1/4)/r² w + V_extra w + z w`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveRadialOp {
    pub mode: ModeIndex,
    pub nu_eff: f64,
    pub mu_eff: f64,
    /// Index of the magnetic kinetic part alone, without the absorbed inverse-square potential.
    pub nu_kinetic: f64,
    /// Angular eigenvalue `Λ` (`ℓ(ℓ + d − 2)` or `(m + α)²`).
    pub lambda_ang: f64,
    pub potential: PotentialSpec,
    coulomb: Option<(f64, f64)>,
}

impl EffectiveRadialOp {
    /// Residual potential not absorbed into the index.
    pub fn v_extra(&self, r: f64) -> f64 {
        match (&self.potential.kind, self.coulomb) {
            (PotentialKind::CustomRadial { v, .. }, _) => v.value(r),
            (_, Some((v_inf, alpha))) => v_inf * r.powf(-alpha),
            _ => 0.0,
        }
    }

    /// True when the residual potential vanishes identically.
    pub fn v_extra_free(&self) -> bool {
        match &self.potential.kind {
            PotentialKind::CustomRadial { v, .. } => matches!(v, RadialFunction::Zero),
            _ => self.coulomb.is_none(),
        }
    }

    /// Radial part `a(r)` of a gradient-type vector potential.
    pub fn a_radial(&self, r: f64) -> f64 {
        self.potential.a_radial(r)
    }

    fn has_gauge(&self) -> bool {
        matches!(&self.potential.kind, PotentialKind::CustomRadial { a, .. } if !matches!(a, RadialFunction::Zero))
    }

    /// Log-derivative `w′/w` of the regular solution at `r₀` (three-term Frobenius expansion).
    pub fn inner_robin(&self, r0: f64, z: Complex64) -> Complex64 {
        let s = self.nu_eff + 0.5;
        let mut beta = Complex64::new(s / r0, 0.0);
        let mut v_reg = 0.0;
        match self.coulomb {
            Some((v_inf, alpha)) => beta -= v_inf * r0.powf(1.0 - alpha) / (2.0 * s + 1.0 - alpha),
            None => v_reg = self.v_extra(r0),
        }
        beta - (z + v_reg) * r0 / (2.0 * (self.nu_eff + 1.0))
    }

    /// Log-derivative `w′/w` of the outgoing (`+`) or incoming (`−`) solution at `r`.
    pub fn outer_robin(&self, r: f64, problem: &ProblemSpec) -> Result<Complex64> {
        let kp = Complex64::new(problem.lambda, problem.epsilon).sqrt();
        let beta = 0.5 / r + kp * hankel1_log_derivative(self.nu_eff, kp * r)?;
        Ok(match problem.sign {
            Sign::Plus => beta,
            Sign::Minus => beta.conj(),
        })
    }
}

/// Builds the reduced operator of one mode.
pub fn effective_index(spec: &PotentialSpec, mode: ModeIndex, problem: &ProblemSpec) -> Result<EffectiveRadialOp> {
    if spec.d != problem.d {
        return Err(MaghelmError::InvalidParameter(format!(
            "potential dimension {} differs from problem dimension {}",
            spec.d, problem.d
        )));
    }
    if mode.d != problem.d {
        return Err(MaghelmError::InvalidParameter("mode dimension mismatch".into()));
    }
    let limit = problem.mode_cutoff as i32;
    if mode.index.abs() > limit {
        return Err(MaghelmError::ModeBeyondCutoff { index: mode.index, cutoff: problem.mode_cutoff });
    }
    let nu_kin_sq = kinetic_index_sq(spec, mode.index)?;
    let shift = ((problem.d as f64 - 2.0) / 2.0).powi(2);
    let lambda_ang = nu_kin_sq - shift;
    let (nu_sq, coulomb) = match spec.kind {
        PotentialKind::InverseSquareV { nu1 } => (nu_kin_sq - nu1, None),
        PotentialKind::CoulombType { v_inf, alpha_exp } if (alpha_exp - 2.0).abs() < 1e-14 => (nu_kin_sq - v_inf, None),
        PotentialKind::CoulombType { v_inf, alpha_exp } => (nu_kin_sq, Some((v_inf, alpha_exp))),
        _ => (nu_kin_sq, None),
    };
    if nu_sq < 0.0 {
        return Err(MaghelmError::IndexBelowCritical { nu2: nu_sq });
    }
    let nu = nu_sq.sqrt();
    Ok(EffectiveRadialOp {
        mode: ModeIndex { nu_eff: nu, ..mode },
        nu_eff: nu,
        mu_eff: nu_sq - 0.25,
        nu_kinetic: nu_kin_sq.sqrt(),
        lambda_ang,
        potential: spec.clone(),
        coulomb,
    })
}

/// Per-mode solution bundle. `du` is the magnetic radial derivative `(∂_r + i a)u`,
/// which is `∂_r u` whenever the vector potential has no radial component.
#[derive(Debug, Clone)]
pub struct ModeSolution {
    pub u: RadialField,
    pub du: RadialField,
    /// Right-hand side `f_mode` (not reduced).
    pub f: RadialField,
    pub mode: ModeIndex,
    pub spec: ProblemSpec,
    pub solver: SolverKind,
    pub op: EffectiveRadialOp,
}

impl ModeSolution {
    pub fn mesh(&self) -> &RadialMesh {
        &self.u.mesh
    }
}

fn blank_mode(d: u32, index: i32, sub: i32) -> ModeIndex {
    ModeIndex { d, index, sub, nu_eff: 0.0 }
}

/// Per-mode reduced right-hand sides `g = r^{(d−1)/2} f_mode`, ordered by `(index, sub)`.
pub fn decompose_rhs(
    source: &SourceSpec,
    potential: &PotentialSpec,
    problem: &ProblemSpec,
    mesh: &Arc<RadialMesh>,
) -> Result<Vec<RadialField>> {
    let mut terms = source.mode_terms(problem.d)?;
    for t in &terms {
        if t.0.unsigned_abs() > problem.mode_cutoff {
            return Err(MaghelmError::ModeBeyondCutoff { index: t.0, cutoff: problem.mode_cutoff });
        }
    }
    terms.sort_by_key(|t| (t.0, t.1));
    let p = problem.half_weight();
    let mut out: Vec<RadialField> = Vec::new();
    for (index, sub, coef, profile) in terms {
        let nu = kinetic_index_sq(potential, index)?.sqrt();
        let mode = ModeIndex { nu_eff: nu, ..blank_mode(problem.d, index, sub) };
        let values: Vec<Complex64> = mesh
            .nodes()
            .iter()
            .map(|&r| Complex64::new(coef * profile.value(r) * r.powf(p), 0.0))
            .collect();
        let jumps: Vec<usize> = match profile {
            RadialProfile::Annulus { inner, outer } => [inner, outer].iter().filter_map(|&r| mesh.index_of(r)).collect(),
            _ => Vec::new(),
        };
        match out.last_mut() {
            Some(prev) if prev.mode.key() == (index, sub) => {
                prev.values.iter_mut().zip(&values).for_each(|(a, b)| *a += b);
                prev.jumps.extend(jumps);
            }
            _ => {
                let mut field = RadialField::new(mesh.clone(), values, mode, true)?;
                field.jumps = jumps;
                out.push(field);
            }
        }
    }
    for field in &mut out {
        field.jumps.sort_unstable();
        field.jumps.dedup();
    }
    Ok(out)
}

fn gauge_phase(op: &EffectiveRadialOp, mesh: &RadialMesh) -> Option<Vec<Complex64>> {
    if !op.has_gauge() {
        return None;
    }
    let a: Vec<f64> = mesh.nodes().iter().map(|&r| op.a_radial(r)).collect();
    let m = mesh.cumulative(&a);
    Some(m.iter().map(|&v| Complex64::from_polar(1.0, v)).collect())
}

fn finish(
    op: &EffectiveRadialOp,
    g: &RadialField,
    problem: &ProblemSpec,
    w: Vec<Complex64>,
    dw: Vec<Complex64>,
    phase: Option<&[Complex64]>,
    solver: SolverKind,
) -> Result<ModeSolution> {
    let mesh = g.mesh.clone();
    let p = problem.half_weight();
    let mut u = Vec::with_capacity(w.len());
    let mut du = Vec::with_capacity(w.len());
    for (i, &r) in mesh.nodes().iter().enumerate() {
        let s = r.powf(-p);
        u.push(w[i] * s);
        du.push((dw[i] - w[i] * (p / r)) * s);
    }
    let f: Vec<Complex64> = g.values.iter().zip(mesh.nodes()).map(|(v, &r)| v * r.powf(-p)).collect();
    if let Some(ph) = phase {
        for i in 0..u.len() {
            let back = ph[i].conj();
            u[i] *= back;
            du[i] *= back;
        }
    }
    let mode = op.mode;
    Ok(ModeSolution {
        u: RadialField::new(mesh.clone(), u, mode, false)?,
        du: RadialField::new(mesh.clone(), du, mode, false)?,
        f: RadialField { jumps: g.jumps.clone(), ..RadialField::new(mesh, f, mode, false)? },
        mode,
        spec: *problem,
        solver,
        op: op.clone(),
    })
}

fn rotated_rhs(g: &RadialField, phase: Option<&[Complex64]>) -> Vec<Complex64> {
    match phase {
        Some(ph) => g.values.iter().zip(ph).map(|(v, e)| v * e).collect(),
        None => g.values.clone(),
    }
}

fn check_rhs(g: &RadialField, problem: &ProblemSpec) -> Result<()> {
    if !g.reduced {
        return Err(MaghelmError::InvalidParameter("right-hand side must be in reduced form".into()));
    }
    if g.mode.d != problem.d {
        return Err(MaghelmError::InvalidParameter("mode dimension mismatch".into()));
    }
    Ok(())
}

/// Weights `(α, β, γ)` of the compact combination `αy″ᵢ₋₁ + βy″ᵢ + γy″ᵢ₊₁` that matches the
/// three-point second difference on cells `a` (left) and `b` (right) through fourth order.
fn compact_weights(a: f64, b: f64) -> (f64, f64, f64) {
    let det = -a * b * (a + b);
    let m = (a * a - a * b + b * b) / 6.0;
    let alpha = ((b - a) / 3.0 * b * b - b * m) / det;
    let gamma = (-a * m - a * a * (b - a) / 3.0) / det;
    (alpha, 1.0 - alpha - gamma, gamma)
}

const GAUSS3: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];

/// Flags the recorded jumps of `g` that lie far enough inside the mesh for one-sided stencils.
fn jump_nodes(g: &RadialField) -> Vec<bool> {
    let n = g.values.len();
    let mut flags = vec![false; n];
    for &i in &g.jumps {
        if i > 2 && i + 3 < n {
            flags[i] = true;
        }
    }
    flags
}

/// Compact three-point finite-difference solve of one mode: fourth order on smooth data,
/// including at recorded jumps of the source.
pub fn solve_mode_fd(op: &EffectiveRadialOp, g: &RadialField, problem: &ProblemSpec) -> Result<ModeSolution> {
    validate_spec(*problem)?;
    check_rhs(g, problem)?;
    let mesh = g.mesh.clone();
    let n = mesh.len();
    let z = problem.z();
    let phase = gauge_phase(op, &mesh);
    let gv = rotated_rhs(g, phase.as_deref());
    let c: Vec<Complex64> = mesh.nodes().iter().map(|&r| z + (op.v_extra(r) - op.mu_eff / (r * r))).collect();
    let jumps = jump_nodes(g);
    // One-sided limits of g at its jumps.
    let left = |i: usize| if jumps[i] { gv[i - 1] * 2.0 - gv[i - 2] } else { gv[i] };
    let right = |i: usize| if jumps[i] { gv[i + 1] * 2.0 - gv[i + 2] } else { gv[i] };
    let mut sub = vec![Complex64::new(0.0, 0.0); n - 1];
    let mut sup = vec![Complex64::new(0.0, 0.0); n - 1];
    let mut diag = vec![Complex64::new(0.0, 0.0); n];
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];
    for i in 1..n - 1 {
        let (a, b) = (mesh.spacing(i - 1), mesh.spacing(i));
        let (al, be, ga) = compact_weights(a, b);
        let wq = 0.5 * (a + b);
        sub[i - 1] = 1.0 / a + c[i - 1] * (wq * al);
        diag[i] = c[i] * (wq * be) - 1.0 / a - 1.0 / b;
        sup[i] = 1.0 / b + c[i + 1] * (wq * ga);
        rhs[i] = (right(i - 1) * al + gv[i] * be + left(i + 1) * ga) * wq;
        if jumps[i] {
            // Exact hat average of g with each side read from its own quadratic interpolant.
            let x = mesh.nodes();
            let side = |nodes: [usize; 3], h: f64, dir: f64| {
                (0..3)
                    .map(|j| {
                        let lag = |r: f64| {
                            (0..3).filter(|&m| m != j).map(|m| (r - x[nodes[m]]) / (x[nodes[j]] - x[nodes[m]])).product::<f64>()
                        };
                        let hat: f64 = GAUSS3.iter().map(|&(t, wt)| {
                            let s = 0.5 * h * (1.0 + t);
                            0.5 * h * wt * (h - s) * lag(x[i] + dir * s)
                        }).sum();
                        gv[nodes[j]] * hat
                    })
                    .sum::<Complex64>()
                    / h
            };
            rhs[i] = side([i + 1, i + 2, i + 3], b, 1.0) + side([i - 1, i - 2, i - 3], a, -1.0);
        }
    }
    let dc = mesh.derivative(&c);
    let dg = mesh.derivative(&gv);
    let beta0 = op.inner_robin(mesh.r_min(), z);
    let beta_n = op.outer_robin(mesh.r_max(), problem)?;
    // Half-cell rows closed with the Robin data through the y‴ term.
    let h = mesh.spacing(0);
    diag[0] = -1.0 / h - beta0 + c[0] * (0.5 * h) + (dc[0] + c[0] * beta0) * (h * h / 6.0);
    sup[0] = Complex64::new(1.0 / h, 0.0);
    rhs[0] = gv[0] * (0.5 * h) + dg[0] * (h * h / 6.0);
    let h = mesh.spacing(n - 2);
    diag[n - 1] = beta_n - 1.0 / h + c[n - 1] * (0.5 * h) - (dc[n - 1] + c[n - 1] * beta_n) * (h * h / 6.0);
    sub[n - 2] = Complex64::new(1.0 / h, 0.0);
    rhs[n - 1] = gv[n - 1] * (0.5 * h) - dg[n - 1] * (h * h / 6.0);
    let w = solve_complex_tridiag(&sub, &diag, &sup, &rhs, problem.lambda, problem.epsilon)?;

    // y″ = g − c y, with one-sided values of g on either side of a jump.
    let ypp = |i: usize, gi: Complex64| gi - c[i] * w[i];
    let mut dw = vec![Complex64::new(0.0, 0.0); n];
    for i in 1..n - 1 {
        let (a, b) = (mesh.spacing(i - 1), mesh.spacing(i));
        if jumps[i] {
            let y3 = (ypp(i + 1, gv[i + 1]) - ypp(i, right(i))) / b;
            dw[i] = (w[i + 1] - w[i]) / b - ypp(i, right(i)) * (0.5 * b) - y3 * (b * b / 6.0);
            continue;
        }
        let d1 = w[i - 1] * (-b / (a * (a + b))) + w[i] * ((b - a) / (a * b)) + w[i + 1] * (a / (b * (a + b)));
        let yl = ypp(i - 1, right(i - 1));
        let yr = ypp(i + 1, left(i + 1));
        let y3 = yl * (-b / (a * (a + b))) + ypp(i, gv[i]) * ((b - a) / (a * b)) + yr * (a / (b * (a + b)));
        dw[i] = d1 - y3 * (a * b / 6.0);
    }
    dw[0] = beta0 * w[0];
    dw[n - 1] = beta_n * w[n - 1];
    finish(op, g, problem, w, dw, phase.as_deref(), SolverKind::Fd)
}

/// Hankel–Green solve `w(r) = ∫ G(r, s) g(s) ds` by trapezoid quadrature of the kernel.
pub fn solve_mode_green(op: &EffectiveRadialOp, g: &RadialField, problem: &ProblemSpec) -> Result<ModeSolution> {
    validate_spec(*problem)?;
    check_rhs(g, problem)?;
    if !op.v_extra_free() {
        return Err(MaghelmError::GreenUnsupported);
    }
    let mesh = g.mesh.clone();
    let phase = gauge_phase(op, &mesh);
    let rhs_g = rotated_rhs(g, phase.as_deref());
    let conj = problem.sign == Sign::Minus;
    let rhs_g: Vec<Complex64> = if conj { rhs_g.iter().map(|v| v.conj()).collect() } else { rhs_g };
    let k = Complex64::new(problem.lambda, problem.epsilon).sqrt();
    let nu = op.nu_eff;
    let n = mesh.len();
    let mut phi1 = Vec::with_capacity(n);
    let mut phi2 = Vec::with_capacity(n);
    let mut dphi1 = Vec::with_capacity(n);
    let mut dphi2 = Vec::with_capacity(n);
    for &r in mesh.nodes() {
        let x = k * r;
        let sr = r.sqrt();
        let (j, jp) = (bessel_j(nu, x)?, bessel_j_prime(nu, x)?);
        let (h, hp) = (hankel1(nu, x)?, hankel1_prime(nu, x)?);
        phi1.push(j * sr);
        phi2.push(h * sr);
        dphi1.push(j * (0.5 / sr) + jp * k * sr);
        dphi2.push(h * (0.5 / sr) + hp * k * sr);
    }
    let wr = Complex64::new(0.0, 2.0 / std::f64::consts::PI);
    let wq = mesh.weights();
    let a: Vec<Complex64> = (0..n).map(|i| phi1[i] * rhs_g[i] * wq[i]).collect();
    let b: Vec<Complex64> = (0..n).map(|i| phi2[i] * rhs_g[i] * wq[i]).collect();
    let mut below = vec![Complex64::new(0.0, 0.0); n];
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        acc += a[i];
        below[i] = acc;
    }
    let mut above = vec![Complex64::new(0.0, 0.0); n];
    acc = Complex64::new(0.0, 0.0);
    for i in (0..n).rev() {
        acc += b[i];
        above[i] = acc;
    }
    let mut w = Vec::with_capacity(n);
    let mut dw = Vec::with_capacity(n);
    for i in 0..n {
        let strict_above = above[i] - b[i];
        w.push((phi2[i] * below[i] + phi1[i] * strict_above) / wr);
        // The kernel derivative jumps at s = r; the diagonal term takes the mean of both sides.
        let strict_below = below[i] - a[i];
        let diag = (dphi2[i] * phi1[i] + dphi1[i] * phi2[i]) * 0.5 * rhs_g[i] * wq[i];
        dw.push((dphi2[i] * strict_below + dphi1[i] * strict_above + diag) / wr);
    }
    if conj {
        w.iter_mut().for_each(|v| *v = v.conj());
        dw.iter_mut().for_each(|v| *v = v.conj());
    }
    finish(op, g, problem, w, dw, phase.as_deref(), SolverKind::Green)
}

/// Solves every populated mode of `f` on `mesh` with the finite-difference solver.
pub fn resolve_on(
    spec: &PotentialSpec,
    source: &SourceSpec,
    problem: &ProblemSpec,
    mesh: &Arc<RadialMesh>,
) -> Result<Vec<ModeSolution>> {
    validate_spec(*problem)?;
    let rhs = decompose_rhs(source, spec, problem, mesh)?;
    rhs.par_iter()
        .map(|g| {
            let op = effective_index(spec, g.mode, problem)?;
            solve_mode_fd(&op, g, problem)
        })
        .collect()
}

/// [`resolve_on`] on the default graded mesh of the problem's truncation.
pub fn resolve(spec: &PotentialSpec, source: &SourceSpec, problem: &ProblemSpec) -> Result<Vec<ModeSolution>> {
    let mesh = Arc::new(RadialMesh::default_for(problem)?);
    resolve_on(spec, source, problem, &mesh)
}

/// Same as [`resolve_on`] with the Hankel–Green solver.
pub fn resolve_green_on(
    spec: &PotentialSpec,
    source: &SourceSpec,
    problem: &ProblemSpec,
    mesh: &Arc<RadialMesh>,
) -> Result<Vec<ModeSolution>> {
    validate_spec(*problem)?;
    let rhs = decompose_rhs(source, spec, problem, mesh)?;
    rhs.par_iter()
        .map(|g| {
            let op = effective_index(spec, g.mode, problem)?;
            solve_mode_green(&op, g, problem)
        })
        .collect()
}

/// Truncated `H¹` distance `(Σ ∫ |Δu′|² + Λ/r²|Δu|² + |Δu|²)^{1/2}` between two bundles.
pub fn h1_distance(a: &[ModeSolution], b: &[ModeSolution]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MaghelmError::LengthMismatch { expected: a.len(), got: b.len() });
    }
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        let mesh = x.mesh();
        let rho = x.spec.d as f64 - 1.0;
        let lam = x.op.lambda_ang;
        total += mesh.integrate_with(|i| {
            let r = mesh.r(i);
            let du = (x.du.values[i] - y.du.values[i]).norm_sqr();
            let u = (x.u.values[i] - y.u.values[i]).norm_sqr();
            (du + (lam / (r * r) + 1.0) * u) * r.powf(rho)
        });
    }
    Ok(total.sqrt())
}

/// Solutions along a decreasing absorption sequence and their successive distances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LapDiagnostics {
    pub epsilons: Vec<f64>,
    pub distances: Vec<f64>,
    pub monotone: bool,
    /// First index from which the distances decrease monotonically.
    pub monotone_from: usize,
    pub geometric: bool,
    pub rate: Option<f64>,
    /// Relative distance of the last solve to the ε = 0 solve.
    pub distance_to_limit: f64,
    /// Same for the Richardson extrapolation `u_N + q/(1 − q)(u_N − u_{N−1})` of the sequence.
    pub extrapolated_distance: Option<f64>,
}

/// Runs the limiting-absorption sequence and compares the last solve with the ε = 0 outgoing solve.
pub fn limiting_absorption(
    spec: &PotentialSpec,
    source: &SourceSpec,
    problem: &ProblemSpec,
    eps_sequence: &[f64],
    mesh: &Arc<RadialMesh>,
) -> Result<(Vec<Vec<ModeSolution>>, LapDiagnostics)> {
    if !(problem.lambda > 0.0) {
        return Err(MaghelmError::InvalidParameter("limiting absorption needs lambda > 0".into()));
    }
    if eps_sequence.is_empty() {
        return Err(MaghelmError::EmptyGrid);
    }
    if eps_sequence.iter().any(|&e| !(e >= 0.0)) || eps_sequence.windows(2).any(|w| w[1] > w[0]) {
        return Err(MaghelmError::NonMonotoneSequence);
    }
    let sols: Vec<Vec<ModeSolution>> = eps_sequence
        .par_iter()
        .map(|&eps| resolve_on(spec, source, &ProblemSpec { epsilon: eps, ..*problem }, mesh))
        .collect::<Result<_>>()?;
    let distances: Vec<f64> = sols.windows(2).map(|w| h1_distance(&w[0], &w[1])).collect::<Result<_>>()?;
    let decreasing = |w: &[f64]| w[1] <= w[0] * (1.0 + 1e-9);
    let monotone = distances.windows(2).all(decreasing);
    let monotone_from = distances.windows(2).rposition(|w| !decreasing(w)).map_or(0, |i| i + 1);
    let ratios: Vec<f64> = distances.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect();
    let rate = ratios.last().copied();
    let tail = &ratios[ratios.len().saturating_sub(2)..];
    let geometric = !tail.is_empty() && monotone_from + 3 <= distances.len() && tail.iter().all(|&q| q < 0.75);
    let limit = resolve_on(spec, source, &ProblemSpec { epsilon: 0.0, ..*problem }, mesh)?;
    let last = sols.last().unwrap();
    let scale = h1_distance(&limit, &zero_like(&limit))?;
    let rel = |x: &[ModeSolution]| -> Result<f64> {
        Ok(if scale > 0.0 { h1_distance(x, &limit)? / scale } else { 0.0 })
    };
    let distance_to_limit = rel(last)?;
    let extrapolated_distance = match (rate, sols.len()) {
        (Some(q), n) if n >= 2 && q < 1.0 => Some(rel(&extrapolate(&sols[n - 2], last, q / (1.0 - q)))?),
        _ => None,
    };
    Ok((
        sols,
        LapDiagnostics {
            epsilons: eps_sequence.to_vec(),
            distances,
            monotone,
            monotone_from,
            geometric,
            rate,
            distance_to_limit,
            extrapolated_distance,
        },
    ))
}

fn extrapolate(prev: &[ModeSolution], last: &[ModeSolution], t: f64) -> Vec<ModeSolution> {
    let mix = |a: &RadialField, b: &RadialField| RadialField {
        values: b.values.iter().zip(&a.values).map(|(y, x)| y + (y - x) * t).collect(),
        ..b.clone()
    };
    prev.iter()
        .zip(last)
        .map(|(p, l)| ModeSolution { u: mix(&p.u, &l.u), du: mix(&p.du, &l.du), ..l.clone() })
        .collect()
}

/// A bundle of the same shape with all fields zero.
pub fn zero_like(sols: &[ModeSolution]) -> Vec<ModeSolution> {
    sols.iter()
        .map(|s| {
            let z = RadialField::zeros(s.u.mesh.clone(), s.mode, false);
            ModeSolution { u: z.clone(), du: z.clone(), f: z, ..s.clone() }
        })
        .collect()
}
