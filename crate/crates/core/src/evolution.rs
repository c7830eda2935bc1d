//! Spectral propagation of `e^{itH_A}` on truncated per-mode operators and the weighted
//! space-time smoothing integrals.
//!
//! Each mode is discretized self-adjointly (`ε = 0`, Dirichlet at both ends) with linear
//! elements and a lumped mass, so propagation is unitary in the discrete `L²` product.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MaghelmError, Result};
use crate::estimates::SobolevWeight;
use crate::fem::magnetic_dirichlet;
use crate::linalg::{sym_tridiag_eigen, SymTridiag};
use crate::model::{validate_spec, EstimateReport, ModeIndex, ProblemSpec, RadialField, RadialMesh, SolverKind};
use crate::potentials::PotentialSpec;
use crate::radial_solver::{decompose_rhs, effective_index, EffectiveRadialOp};
use crate::source::SourceSpec;

/// Eigenpairs of `L = −(H_A)_mode` in the reduced variable.
///
/// `eigenvectors[n]` holds nodal values on the whole mesh (zero at both ends) and the
/// family is orthonormal for the lumped product `Σ wᵢ xᵢ yᵢ`.
#[derive(Debug, Clone)]
pub struct ModeEigensystem {
    pub mode: ModeIndex,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub mesh: Arc<RadialMesh>,
    /// The operator as `(diag, off)` over interior nodes before mass scaling.
    stiffness: SymTridiag,
}

impl ModeEigensystem {
    fn lumped(&self, i: usize) -> f64 {
        self.mesh.weights()[i]
    }

    /// `⟨f, vₙ⟩` for every eigenvector, with `f` given on the mesh.
    pub fn coefficients(&self, f: &RadialField) -> Result<Vec<Complex64>> {
        if f.values.len() != self.mesh.len() {
            return Err(MaghelmError::LengthMismatch { expected: self.mesh.len(), got: f.values.len() });
        }
        let w = f.to_reduced();
        Ok(self
            .eigenvectors
            .par_iter()
            .map(|v| (1..v.len() - 1).map(|i| w.values[i] * (v[i] * self.lumped(i))).sum())
            .collect())
    }

    /// `Σₙ cₙ vₙ` as a reduced field.
    pub fn synthesize(&self, c: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.mesh.len()];
        for (cn, v) in c.iter().zip(&self.eigenvectors) {
            if cn.norm_sqr() == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(v) {
                *o += cn * x;
            }
        }
        out
    }

    /// `‖L vₙ − λₙ vₙ‖ / ‖vₙ‖` in the lumped norm.
    pub fn residual(&self, n: usize) -> f64 {
        let v = &self.eigenvectors[n];
        let inner = &v[1..v.len() - 1];
        let kv = self.stiffness.mul(inner);
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, x) in inner.iter().enumerate() {
            let w = self.lumped(j + 1);
            num += (kv[j] / w - self.eigenvalues[n] * x).powi(2) * w;
            den += x * x * w;
        }
        (num / den).sqrt()
    }

    /// Largest entry of `G − I` for the lumped Gram matrix of the eigenvectors.
    pub fn gram_defect(&self) -> f64 {
        let n = self.eigenvectors.len();
        (0..n)
            .into_par_iter()
            .map(|a| {
                let va = &self.eigenvectors[a];
                (0..n)
                    .map(|b| {
                        let vb = &self.eigenvectors[b];
                        let g: f64 = (0..va.len()).map(|i| va[i] * vb[i] * self.lumped(i)).sum();
                        (g - if a == b { 1.0 } else { 0.0 }).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Full eigendecomposition of one mode's self-adjoint truncation.
pub fn eigendecompose(op: &EffectiveRadialOp, mesh: &Arc<RadialMesh>) -> Result<ModeEigensystem> {
    let n = mesh.len();
    let mut k = magnetic_dirichlet(mesh, op.nu_eff * op.nu_eff);
    for (j, d) in k.diag.iter_mut().enumerate() {
        let i = j + 1;
        *d -= op.v_extra(mesh.r(i)) * mesh.weights()[i];
    }
    let s: Vec<f64> = (1..n - 1).map(|i| mesh.weights()[i].sqrt()).collect();
    let scaled = SymTridiag::new(
        k.diag.iter().zip(&s).map(|(d, si)| d / (si * si)).collect(),
        k.off.iter().enumerate().map(|(j, o)| o / (s[j] * s[j + 1])).collect(),
    );
    let eig = sym_tridiag_eigen(&scaled)?;
    let eigenvectors = eig
        .vectors
        .into_iter()
        .map(|y| {
            let mut v = vec![0.0; n];
            for (j, yj) in y.iter().enumerate() {
                v[j + 1] = yj / s[j];
            }
            v
        })
        .collect();
    Ok(ModeEigensystem { mode: op.mode, eigenvalues: eig.values, eigenvectors, mesh: mesh.clone(), stiffness: k })
}

/// `e^{itH_A} f = Σ e^{−iλₙt}⟨f, vₙ⟩vₙ` for one mode, returned in plain form.
pub fn propagate(eig: &ModeEigensystem, f_mode: &RadialField, t: f64) -> Result<RadialField> {
    let c = eig.coefficients(f_mode)?;
    let rotated: Vec<Complex64> = c
        .iter()
        .zip(&eig.eigenvalues)
        .map(|(cn, &l)| cn * Complex64::from_polar(1.0, -l * t))
        .collect();
    let w = eig.synthesize(&rotated);
    Ok(RadialField::new(eig.mesh.clone(), w, f_mode.mode, true)?.to_plain())
}

const MAX_TIME_STEPS: usize = 1 << 22;

/// Time quadrature for the space-time integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeQuadrature {
    /// Composite trapezoid; the fastest retained phase turns by at most `max_phase_step` per step.
    Trapezoid { max_phase_step: f64 },
}

impl Default for TimeQuadrature {
    fn default() -> Self {
        TimeQuadrature::Trapezoid { max_phase_step: std::f64::consts::PI / 8.0 }
    }
}

/// Discretization controls for the smoothing integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingOptions {
    /// Approximate node count of the graded mesh.
    pub nodes: usize,
    pub quadrature: TimeQuadrature,
    /// The highest-frequency eigencomponents are dropped while their combined weight stays
    /// below `retain_tol · Σ|cₙ|²`.
    pub retain_tol: f64,
}

impl Default for SmoothingOptions {
    fn default() -> Self {
        SmoothingOptions { nodes: 1024, quadrature: TimeQuadrature::default(), retain_tol: 1e-12 }
    }
}

/// `I(T) = ∫₀ᵀ ∫ |u(t)|² ω^{1/2}/|x| dx dt` at several horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingCurve {
    pub horizons: Vec<f64>,
    pub integrals: Vec<f64>,
    /// `‖f‖²` (free evolution) or the forcing norm `∫₀ᵀ∫|F|²|x|/ω^{1/2}` at each horizon.
    pub reference: Vec<f64>,
    /// Spectral mean `λ̄` of the data.
    pub mean_lambda: f64,
    /// Ballistic wall-return time `2(r_max − supp)/(2√λ̄)`.
    pub crossing_time: f64,
    pub time_step: f64,
    /// Largest retained `|λₙ|`.
    pub fastest: f64,
    pub retained: usize,
}

impl SmoothingCurve {
    /// `(I(Tₖ) − I(Tₖ₋₁)) / I(Tₖ₋₁)` for consecutive horizons.
    pub fn increments(&self) -> Vec<f64> {
        self.integrals.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect()
    }
}

struct ModeData {
    lambdas: Vec<f64>,
    coef: Vec<Complex64>,
    /// `W_{nm} = Σ wᵢ ρ(rᵢ) vₙ(rᵢ) v_m(rᵢ)` over retained pairs, row-major.
    gram: Vec<f64>,
}

fn weight_exponent(weight: &SobolevWeight) -> Result<f64> {
    match *weight {
        SobolevWeight::InversePower { beta } if beta.is_finite() => Ok(beta),
        _ => Err(MaghelmError::DegenerateWeight(format!("{weight:?}"))),
    }
}

fn mode_data(eig: &ModeEigensystem, coef: &[Complex64], rho: &dyn Fn(f64) -> f64, tol: f64) -> ModeData {
    let total: f64 = coef.iter().map(|c| c.norm_sqr()).sum();
    let mut cut = coef.len();
    let mut tail = 0.0;
    while cut > 0 && tail + coef[cut - 1].norm_sqr() <= tol * total {
        cut -= 1;
        tail += coef[cut].norm_sqr();
    }
    let keep: Vec<usize> = (0..cut).filter(|&n| total > 0.0 && coef[n].norm_sqr() > 0.0).collect();
    let mesh = &eig.mesh;
    let dens: Vec<f64> = (0..mesh.len()).map(|i| mesh.weights()[i] * rho(mesh.r(i))).collect();
    let k = keep.len();
    let gram: Vec<f64> = (0..k * k)
        .into_par_iter()
        .map(|ab| {
            let (va, vb) = (&eig.eigenvectors[keep[ab / k]], &eig.eigenvectors[keep[ab % k]]);
            (0..dens.len()).map(|i| va[i] * vb[i] * dens[i]).sum()
        })
        .collect();
    ModeData {
        lambdas: keep.iter().map(|&n| eig.eigenvalues[n]).collect(),
        coef: keep.iter().map(|&n| coef[n]).collect(),
        gram,
    }
}

/// Spectral amplitudes at time `t`: free evolution or constant forcing from `t = 0`.
fn amplitudes(m: &ModeData, t: f64, forced: bool) -> Vec<Complex64> {
    m.lambdas
        .iter()
        .zip(&m.coef)
        .map(|(&l, &c)| {
            if !forced {
                return c * Complex64::from_polar(1.0, -l * t);
            }
            // uₙ(t) = −i gₙ ∫₀ᵗ e^{−iλₙ(t−s)} ds.
            if (l * t).abs() < 1e-8 {
                c * Complex64::new(0.0, -t)
            } else {
                c * (Complex64::from_polar(1.0, -l * t) - 1.0) / l
            }
        })
        .collect()
}

fn weighted_density(m: &ModeData, a: &[Complex64]) -> f64 {
    let k = a.len();
    let mut total = 0.0;
    for i in 0..k {
        let row = &m.gram[i * k..(i + 1) * k];
        let s: Complex64 = row.iter().zip(a).map(|(g, aj)| aj * g).sum();
        total += (a[i].conj() * s).re;
    }
    total
}

/// Weighted space-time integrals of `e^{itH_A}f` (or of the forced solution with `F = f` on
/// `[0, T]` and zero initial data) at each horizon.
pub fn smoothing_curve(
    spec: &PotentialSpec,
    weight: &SobolevWeight,
    f: &SourceSpec,
    problem: &ProblemSpec,
    horizons: &[f64],
    forced: bool,
    opts: &SmoothingOptions,
) -> Result<SmoothingCurve> {
    let beta = weight_exponent(weight)?;
    if horizons.is_empty() {
        return Err(MaghelmError::EmptyGrid);
    }
    if horizons.iter().any(|&t| !(t > 0.0)) || horizons.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MaghelmError::InvalidParameter("horizons must be positive and increasing".into()));
    }
    let problem = validate_spec(*problem)?;
    let mesh = Arc::new(RadialMesh::graded(problem.r_min, problem.r_max, opts.nodes)?);
    let rhs = decompose_rhs(f, spec, &problem, &mesh)?;
    let rho = move |r: f64| r.powf(-beta - 1.0);
    let modes = rhs
        .par_iter()
        .map(|g| {
            let op = effective_index(spec, g.mode, &problem)?;
            let eig = eigendecompose(&op, &mesh)?;
            let c = eig.coefficients(g)?;
            Ok(mode_data(&eig, &c, &rho, opts.retain_tol))
        })
        .collect::<Result<Vec<_>>>()?;
    let f_norm: f64 = rhs.iter().map(|g| mesh.integrate_with(|i| g.values[i].norm_sqr())).sum();
    let forcing_density: f64 = rhs
        .iter()
        .map(|g| mesh.integrate_with(|i| g.values[i].norm_sqr() * mesh.r(i).powf(1.0 + beta)))
        .sum();
    let weight_sum: f64 = modes.iter().flat_map(|m| m.coef.iter().map(|c| c.norm_sqr())).sum();
    let mean_lambda = if weight_sum > 0.0 {
        modes
            .iter()
            .flat_map(|m| m.coef.iter().zip(&m.lambdas).map(|(c, l)| c.norm_sqr() * l))
            .sum::<f64>()
            / weight_sum
    } else {
        0.0
    };
    let fastest = modes.iter().flat_map(|m| m.lambdas.iter().map(|l| l.abs())).fold(0.0, f64::max);
    let t_max = *horizons.last().unwrap();
    let TimeQuadrature::Trapezoid { max_phase_step } = opts.quadrature;
    let steps = (t_max * fastest / max_phase_step).ceil().max(64.0);
    if !(steps <= MAX_TIME_STEPS as f64) {
        return Err(MaghelmError::InvalidParameter(format!(
            "time grid needs {steps:.3e} steps (fastest retained rate {fastest:.3e}); raise retain_tol or shorten T"
        )));
    }
    let steps = steps as usize;
    let dt = t_max / steps as f64;
    let q: Vec<f64> = (0..=steps)
        .into_par_iter()
        .map(|s| {
            let t = s as f64 * dt;
            modes.iter().map(|m| weighted_density(m, &amplitudes(m, t, forced))).sum()
        })
        .collect();
    let mut cum = vec![0.0; q.len()];
    for s in 1..q.len() {
        cum[s] = cum[s - 1] + 0.5 * dt * (q[s] + q[s - 1]);
    }
    let integrals = horizons
        .iter()
        .map(|&t| {
            let x = t / dt;
            let s = (x.floor() as usize).min(steps - 1);
            let frac = x - s as f64;
            cum[s] + frac * (cum[s + 1] - cum[s])
        })
        .collect();
    let reference = horizons.iter().map(|&t| if forced { t * forcing_density } else { f_norm }).collect();
    let support = f.support_radius().min(problem.r_max);
    let crossing_time = if mean_lambda > 0.0 {
        2.0 * (problem.r_max - support) / (2.0 * mean_lambda.sqrt())
    } else {
        f64::INFINITY
    };
    Ok(SmoothingCurve {
        horizons: horizons.to_vec(),
        integrals,
        reference,
        mean_lambda,
        crossing_time,
        time_step: dt,
        fastest,
        retained: modes.iter().map(|m| m.coef.len()).sum(),
    })
}

fn report(kind: &str, curve: &SmoothingCurve, problem: &ProblemSpec, nodes: usize) -> Result<EstimateReport> {
    let n = curve.integrals.len();
    let lhs = curve.integrals[n - 1];
    let rhs = curve.reference[n - 1];
    let t = curve.horizons[n - 1];
    let growth = if n >= 2 { curve.increments()[n - 2] } else { f64::NAN };
    let flag = if t > curve.crossing_time { "; T exceeds the wall-return time" } else { "" };
    let notes = format!(
        "T = {t}, I(T) - I(T/2) = {growth:.4e} I(T/2), crossing time {:.4}, dt = {:.4e}, retained {}{flag}",
        curve.crossing_time, curve.time_step, curve.retained
    );
    Ok(EstimateReport::new(kind, lhs, rhs, *problem, nodes, SolverKind::Fd)?.with_notes(notes))
}

/// `I(T) / ‖f‖²` for the free evolution, with the saturation `I(T) − I(T/2)` in the notes.
pub fn smoothing_check(
    spec: &PotentialSpec,
    weight: &SobolevWeight,
    f: &SourceSpec,
    problem: &ProblemSpec,
    t: f64,
    opts: &SmoothingOptions,
) -> Result<EstimateReport> {
    let curve = smoothing_curve(spec, weight, f, problem, &[0.5 * t, t], false, opts)?;
    if curve.reference[0] == 0.0 {
        return EstimateReport::new("smoothing", 0.0, 1.0, *problem, opts.nodes, SolverKind::Fd)
            .map(|r| r.with_notes("f = 0: I(T) = 0 against unit reference"));
    }
    report("smoothing", &curve, problem, opts.nodes)
}

/// `I(T)` for zero initial data and forcing `F = f·1_{[0,T]}`, against `∫₀ᵀ∫|F|²|x|/ω^{1/2}`.
pub fn forced_smoothing_check(
    spec: &PotentialSpec,
    weight: &SobolevWeight,
    f: &SourceSpec,
    problem: &ProblemSpec,
    t: f64,
    opts: &SmoothingOptions,
) -> Result<EstimateReport> {
    let curve = smoothing_curve(spec, weight, f, problem, &[0.5 * t, t], true, opts)?;
    report("smoothing_forced", &curve, problem, opts.nodes)
}
