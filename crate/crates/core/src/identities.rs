//! Exact multiplier identities assembled per mode on computed solutions, with the
//! truncation surface terms at `r_min` and `r_max` written out explicitly.
//!
//! Each identity has the form `lhs − rhs + boundary = 0`, where `lhs` and `rhs` are the
//! truncated volume integrals of the whole-space statement and `boundary` collects the
//! integration-by-parts terms `[·]_{r_min}^{r_max}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MaghelmError, Result};
use crate::model::{RadialField, RadialMesh};
use crate::potentials::PotentialKind;
use crate::radial_solver::ModeSolution;

/// Radial multiplier `ψ`, described through `ψ′`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MultiplierSpec {
    /// `ψ = r²/2`.
    Quadratic,
    /// `ψ = r³/3`.
    Cubic,
    /// `ψ′ = r²` for `r ≤ R₁`, `R₁ r` beyond.
    PiecewiseR { r1: f64 },
    /// `ψ′` sampled on the mesh nodes.
    Custom { psi1: Vec<f64> },
}

/// Nodal samples of `ψ′`, `ψ″`, `ψ′/r` and `(ψ′/r)′`. At a kink the second derivative
/// takes the mean of its one-sided values.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSamples {
    pub psi1: Vec<f64>,
    pub psi2: Vec<f64>,
    pub psi1_over_r: Vec<f64>,
    pub d_psi1_over_r: Vec<f64>,
}

impl MultiplierSamples {
    /// `Δψ = ψ″ + (d − 1)ψ′/r`.
    pub fn laplacian(&self, d: u32, i: usize) -> f64 {
        self.psi2[i] + (d as f64 - 1.0) * self.psi1_over_r[i]
    }
}

pub fn multiplier_eval(m: &MultiplierSpec, mesh: &RadialMesh) -> Result<MultiplierSamples> {
    let nodes = mesh.nodes();
    let map = |f: &dyn Fn(f64) -> f64| nodes.iter().map(|&r| f(r)).collect::<Vec<f64>>();
    let samples = match m {
        MultiplierSpec::Quadratic => MultiplierSamples {
            psi1: map(&|r| r),
            psi2: map(&|_| 1.0),
            psi1_over_r: map(&|_| 1.0),
            d_psi1_over_r: map(&|_| 0.0),
        },
        MultiplierSpec::Cubic => MultiplierSamples {
            psi1: map(&|r| r * r),
            psi2: map(&|r| 2.0 * r),
            psi1_over_r: map(&|r| r),
            d_psi1_over_r: map(&|_| 1.0),
        },
        MultiplierSpec::PiecewiseR { r1 } => {
            let r1 = *r1;
            if !(r1 > 0.0) || mesh.index_of(r1).is_none() {
                return Err(MaghelmError::OffMesh(r1));
            }
            let tol = 1e-10 * r1;
            let side = |r: f64, inner: f64, outer: f64, kink: f64| {
                if (r - r1).abs() <= tol {
                    kink
                } else if r < r1 {
                    inner
                } else {
                    outer
                }
            };
            MultiplierSamples {
                psi1: map(&|r| if r <= r1 { r * r } else { r1 * r }),
                psi2: map(&|r| side(r, 2.0 * r, r1, 1.5 * r1)),
                psi1_over_r: map(&|r| if r <= r1 { r } else { r1 }),
                d_psi1_over_r: map(&|r| side(r, 1.0, 0.0, 0.5)),
            }
        }
        MultiplierSpec::Custom { psi1 } => {
            if psi1.len() != mesh.len() {
                return Err(MaghelmError::LengthMismatch { expected: mesh.len(), got: psi1.len() });
            }
            check_continuity(psi1)?;
            let over_r: Vec<f64> = psi1.iter().zip(nodes).map(|(p, r)| p / r).collect();
            MultiplierSamples {
                psi2: mesh.derivative_real(psi1),
                d_psi1_over_r: mesh.derivative_real(&over_r),
                psi1: psi1.clone(),
                psi1_over_r: over_r,
            }
        }
    };
    for (r, p) in nodes.iter().zip(&samples.psi1) {
        if *r <= 1.0 && p.abs() > r * (1.0 + 1e-12) {
            return Err(MaghelmError::HypothesisViolated(format!("multiplier needs |psi'(r)| <= r for r <= 1, fails at r = {r}")));
        }
    }
    Ok(samples)
}

fn check_continuity(psi1: &[f64]) -> Result<()> {
    if psi1.iter().any(|v| !v.is_finite()) {
        return Err(MaghelmError::MultiplierRejected("non-finite sample".into()));
    }
    let (lo, hi) = psi1.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    // A single cell carrying a quarter of the total variation is a jump, not a slope.
    match psi1.windows(2).position(|w| (w[1] - w[0]).abs() > 0.25 * span && span > 0.0) {
        Some(i) => Err(MaghelmError::MultiplierRejected(format!("psi' is discontinuous near node {i}"))),
        None => Ok(()),
    }
}

/// Both sides of one identity and its truncation surface term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub identity_id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub boundary_correction: f64,
    /// Part of `boundary_correction` coming from `r_max`.
    pub boundary_outer: f64,
    pub residual: f64,
    pub scale: f64,
}

impl IdentityResidual {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.residual / self.scale
        } else {
            0.0
        }
    }
}

/// Running sums of signed terms together with their magnitudes.
#[derive(Default)]
struct Tally {
    value: f64,
    magnitude: f64,
}

impl Tally {
    fn add(&mut self, v: f64) {
        self.value += v;
        self.magnitude += v.abs();
    }
}

struct Assembled {
    lhs: Tally,
    rhs: Tally,
    inner: f64,
    outer: f64,
}

impl Assembled {
    fn new() -> Self {
        Assembled { lhs: Tally::default(), rhs: Tally::default(), inner: 0.0, outer: 0.0 }
    }

    /// Adds `c·([F]_{r_min}^{r_max})`.
    fn boundary(&mut self, c: f64, at: impl Fn(usize) -> f64, last: usize) {
        self.outer += c * at(last);
        self.inner -= c * at(0);
    }

    fn finish(self, id: &str) -> IdentityResidual {
        let boundary = self.inner + self.outer;
        let residual = (self.lhs.value - self.rhs.value + boundary).abs();
        let scale = self.lhs.value.abs().max(self.rhs.value.abs()).max(self.lhs.magnitude).max(self.rhs.magnitude);
        IdentityResidual {
            identity_id: id.to_string(),
            lhs: self.lhs.value,
            rhs: self.rhs.value,
            boundary_correction: boundary,
            boundary_outer: self.outer,
            residual,
            scale,
        }
    }
}

/// Per-mode samples shared by every identity.
struct ModeData<'a> {
    mesh: &'a RadialMesh,
    u: &'a [Complex64],
    du: &'a [Complex64],
    rho: Vec<f64>,
    v: Vec<f64>,
    dv: Vec<f64>,
    lambda_ang: f64,
    d: u32,
    below: Vec<f64>,
    above: Vec<f64>,
    f_sides: Vec<(Complex64, Complex64)>,
}

impl<'a> ModeData<'a> {
    fn new(s: &'a ModeSolution) -> Self {
        let mesh = s.mesh();
        let d = s.spec.d;
        let pot = &s.op.potential;
        let f = &s.f.values;
        let breaks = breakpoints(mesh, &s.f);
        let (below, above) = split_simpson_weights(mesh, &breaks);
        let mut f_sides: Vec<(Complex64, Complex64)> = f.iter().map(|&v| (v, v)).collect();
        for &i in &breaks {
            if s.f.jumps.contains(&i) && is_jump(&s.f, i) {
                f_sides[i] = (f[i - 1] * 2.0 - f[i - 2], f[i + 1] * 2.0 - f[i + 2]);
            }
        }
        ModeData {
            mesh,
            u: &s.u.values,
            du: &s.du.values,
            rho: mesh.nodes().iter().map(|r| r.powi(d as i32 - 1)).collect(),
            v: mesh.nodes().iter().map(|&r| pot.v_radial(r)).collect(),
            dv: mesh.nodes().iter().map(|&r| pot.dv_radial(r)).collect(),
            lambda_ang: s.op.lambda_ang,
            d,
            below,
            above,
            f_sides,
        }
    }

    fn int(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.rho.len()).map(|i| (self.below[i] + self.above[i]) * f(i) * self.rho[i]).sum()
    }

    /// Integral of a term linear in `f`, using one-sided limits of `f` at its jumps.
    fn int_f(&self, f: impl Fn(usize, Complex64) -> f64) -> f64 {
        (0..self.rho.len())
            .map(|i| {
                let (lo, hi) = self.f_sides[i];
                (self.below[i] * f(i, lo) + self.above[i] * f(i, hi)) * self.rho[i]
            })
            .sum()
    }

    fn grad2(&self, i: usize) -> f64 {
        let r = self.mesh.r(i);
        self.du[i].norm_sqr() + self.lambda_ang / (r * r) * self.u[i].norm_sqr()
    }

    fn last(&self) -> usize {
        self.mesh.len() - 1
    }

    /// `ρ u′ ū` at node `i`.
    fn flux(&self, i: usize) -> Complex64 {
        self.du[i] * self.u[i].conj() * self.rho[i]
    }
}

/// Nodes where the integrands may lose smoothness: the grading junction and the recorded jumps
/// of `f`.
fn breakpoints(mesh: &RadialMesh, f: &RadialField) -> Vec<usize> {
    let n = mesh.len();
    let mut b = vec![0, n - 1];
    b.extend(mesh.index_of(mesh.junction()));
    b.extend(f.jumps.iter().copied().filter(|&i| is_jump(f, i)));
    b.sort_unstable();
    b.dedup();
    b
}

/// Jumps with two nodes on either side for the one-sided extrapolation.
fn is_jump(f: &RadialField, i: usize) -> bool {
    i >= 2 && i + 2 < f.values.len()
}

/// Quadrature weights that apply composite Simpson on each piece between consecutive
/// breakpoints, closing an odd cell count with a quadratic through the last three nodes.
pub fn piecewise_simpson_weights(mesh: &RadialMesh, breaks: &[usize]) -> Vec<f64> {
    let (below, above) = split_simpson_weights(mesh, breaks);
    below.iter().zip(&above).map(|(a, b)| a + b).collect()
}

/// [`piecewise_simpson_weights`] split into the part each node receives from the piece ending
/// at it and the part from the piece that starts at or contains it.
fn split_simpson_weights(mesh: &RadialMesh, breaks: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let x = mesh.nodes();
    let mut below = vec![0.0; x.len()];
    let mut w = vec![0.0; x.len()];
    for piece in breaks.windows(2) {
        let (a, b) = (piece[0], piece[1]);
        let cells = b - a;
        let end = w[b];
        if cells == 1 {
            let h = x[b] - x[a];
            w[a] += 0.5 * h;
            w[b] += 0.5 * h;
            below[b] += w[b] - end;
            w[b] = end;
            continue;
        }
        let mut i = a;
        while i + 2 <= b {
            let (h0, h1) = (x[i + 1] - x[i], x[i + 2] - x[i + 1]);
            let s = (h0 + h1) / 6.0;
            w[i] += s * (2.0 - h1 / h0);
            w[i + 1] += s * (h0 + h1).powi(2) / (h0 * h1);
            w[i + 2] += s * (2.0 - h0 / h1);
            i += 2;
        }
        if i < b {
            // Integral over [x₁, x₂] of the quadratic through x₀, x₁, x₂.
            let (x0, x1, x2) = (x[i - 1], x[i], x[i + 1]);
            let (h0, h1) = (x1 - x0, x2 - x1);
            w[i - 1] += -h1.powi(3) / (6.0 * h0 * (h0 + h1));
            w[i] += h1 * (3.0 * h0 + h1) / (6.0 * h0);
            w[i + 1] += h1 * (3.0 * h0 + 2.0 * h1) / (6.0 * (h0 + h1));
        }
        below[b] += w[b] - end;
        w[b] = end;
    }
    (below, w)
}

fn check_bundle(sols: &[ModeSolution]) -> Result<()> {
    if sols.is_empty() {
        return Err(MaghelmError::EmptyGrid);
    }
    Ok(())
}

/// Residuals of the energy identity
/// `∫φλ|u|² − ∫φ|∇_A u|² + ∫φV|u|² − Re∫φ′ ∂_r u ū = Re∫φ f ū`
/// and of the absorption identity `Im z ∫φ|u|² − Im∫φ′ ∂_r u ū = Im∫φ f ū`, with `φ` and `φ′` sampled on the mesh.
pub fn symmetric_antisymmetric_residuals(
    sols: &[ModeSolution],
    phi: &[f64],
    dphi: &[f64],
) -> Result<(IdentityResidual, IdentityResidual)> {
    check_bundle(sols)?;
    let mut re = Assembled::new();
    let mut im = Assembled::new();
    for s in sols {
        if phi.len() != s.u.values.len() || dphi.len() != phi.len() {
            return Err(MaghelmError::LengthMismatch { expected: s.u.values.len(), got: phi.len() });
        }
        let m = ModeData::new(s);
        let z = s.spec.z();
        re.lhs.add(m.int(|i| phi[i] * z.re * m.u[i].norm_sqr()));
        re.lhs.add(-m.int(|i| phi[i] * m.grad2(i)));
        re.lhs.add(m.int(|i| phi[i] * m.v[i] * m.u[i].norm_sqr()));
        re.lhs.add(-m.int(|i| dphi[i] * (m.du[i] * m.u[i].conj()).re));
        re.rhs.add(m.int_f(|i, f| phi[i] * (f * m.u[i].conj()).re));
        re.boundary(1.0, |i| phi[i] * m.flux(i).re, m.last());

        im.lhs.add(m.int(|i| phi[i] * z.im * m.u[i].norm_sqr()));
        im.lhs.add(-m.int(|i| dphi[i] * (m.du[i] * m.u[i].conj()).im));
        im.rhs.add(m.int_f(|i, f| phi[i] * (f * m.u[i].conj()).im));
        im.boundary(1.0, |i| phi[i] * m.flux(i).im, m.last());
    }
    Ok((re.finish("energy"), im.finish("absorption")))
}

/// Surface terms of the energy (`Re`) and absorption (`Im`) identities for test function `φ`.
fn flux_terms(a: &mut Assembled, m: &ModeData, c_re: f64, c_im: f64, phi: impl Fn(usize) -> f64) {
    let last = m.last();
    a.boundary(c_re, |i| phi(i) * m.flux(i).re, last);
    a.boundary(c_im, |i| phi(i) * m.flux(i).im, last);
}

/// Residual of the key multiplier identity for a radial multiplier `ψ`.
pub fn morawetz_residual(sols: &[ModeSolution], mult: &MultiplierSpec) -> Result<IdentityResidual> {
    check_bundle(sols)?;
    if matches!(mult, MultiplierSpec::Cubic) && !matches!(sols[0].op.potential.kind, PotentialKind::Free) {
        return Err(MaghelmError::HypothesisViolated(
            "the cubic multiplier is bounded only in the constant-coefficient case".into(),
        ));
    }
    let spec = sols[0].spec;
    if !(spec.lambda > 0.0) {
        return Err(MaghelmError::InvalidParameter("key identity needs lambda > 0".into()));
    }
    let k = spec.lambda.sqrt();
    let s_sign = spec.sign.factor();
    let eps = spec.epsilon;
    let c_eps = eps / (2.0 * k);
    let shift = Complex64::new(0.0, s_sign * k);
    let ms = multiplier_eval(mult, sols[0].mesh())?;
    let dm1 = spec.d as f64 - 1.0;
    let mut a = Assembled::new();
    for s in sols {
        let m = ModeData::new(s);
        let shifted = |i: usize| m.du[i] - shift * m.u[i];
        let tang = |i: usize| {
            let r = m.mesh.r(i);
            m.lambda_ang / (r * r) * m.u[i].norm_sqr()
        };
        let uu = |i: usize| m.u[i].norm_sqr();
        let reu = |i: usize| (m.du[i] * m.u[i].conj()).re;
        a.lhs.add(0.5 * m.int(|i| ms.psi2[i] * shifted(i).norm_sqr()));
        a.lhs.add(m.int(|i| (ms.psi1_over_r[i] - 0.5 * ms.psi2[i]) * tang(i)));
        a.lhs.add(0.5 * dm1 * m.int(|i| ms.d_psi1_over_r[i] * reu(i)));
        a.lhs.add(c_eps * m.int(|i| ms.psi1[i] * (shifted(i).norm_sqr() + tang(i))));
        a.lhs.add(0.5 * m.int(|i| (ms.psi2[i] * m.v[i] + ms.psi1[i] * m.dv[i]) * uu(i)));
        a.lhs.add(c_eps * m.int(|i| ms.psi2[i] * reu(i)));
        a.lhs.add(-c_eps * m.int(|i| ms.psi1[i] * m.v[i] * uu(i)));
        a.rhs.add(-c_eps * m.int_f(|i, f| ms.psi1[i] * (f * m.u[i].conj()).re));
        a.rhs.add(-m.int_f(|i, f| ms.psi1[i] * (f * (m.du[i] - shift * m.u[i]).conj()).re));
        a.rhs.add(-0.5 * dm1 * m.int_f(|i, f| ms.psi1_over_r[i] * (f * m.u[i].conj()).re));

        // Energy identity with φ = ψ″/2 and with φ = −ε ψ′/(2k), absorption identity with φ = s k ψ′.
        flux_terms(&mut a, &m, 0.5, 0.0, |i| ms.psi2[i]);
        flux_terms(&mut a, &m, -c_eps, 0.0, |i| ms.psi1[i]);
        flux_terms(&mut a, &m, 0.0, s_sign * k, |i| ms.psi1[i]);
        // Symmetric multiplier ψ′∂_r ū + ½Δψ ū.
        let lam = spec.lambda;
        let d = m.d;
        a.boundary(
            -1.0,
            |i| {
                let r = m.mesh.r(i);
                let w = -m.lambda_ang / (r * r) + m.v[i] + lam;
                let mult = (m.du[i] * ms.psi1[i] + m.u[i] * (0.5 * ms.laplacian(d, i))).conj();
                m.rho[i] * ((m.du[i] * mult).re - 0.5 * ms.psi1[i] * m.du[i].norm_sqr() + 0.5 * w * ms.psi1[i] * uu(i))
            },
            m.last(),
        );
    }
    Ok(a.finish("key"))
}

/// Residual of the constant-coefficient identity with the cubic multiplier `ψ = r³/3`:
/// `½∫|x||∂_r u − i s√λ u + (d−1)u/(2|x|)|² + (ε/4√λ)∫|x|²|∇(e^{−is√λ|x|}u)|²
///  = (dε/4√λ)∫|u|² − ½Re∫|x|² f (∂_r ū + i s√λ ū) − ((d−1)/4)Re∫|x| f ū − (ε/4√λ)Re∫|x|² f ū`.
pub fn alpha1_residual(sols: &[ModeSolution]) -> Result<IdentityResidual> {
    check_bundle(sols)?;
    if !matches!(sols[0].op.potential.kind, PotentialKind::Free) {
        return Err(MaghelmError::InvalidParameter("the cubic identity is stated for the free case only".into()));
    }
    let key = morawetz_residual(sols, &MultiplierSpec::Cubic)?;
    let spec = sols[0].spec;
    let k = spec.lambda.sqrt();
    let eps = spec.epsilon;
    let shift = Complex64::new(0.0, spec.sign.factor() * k);
    let dm1 = spec.d as f64 - 1.0;
    let d = spec.d as f64;
    let mut a = Assembled::new();
    for s in sols {
        let m = ModeData::new(s);
        let sq = |i: usize| m.du[i] - shift * m.u[i] + m.u[i] * (dm1 / (2.0 * m.mesh.r(i)));
        let shifted = |i: usize| {
            let r = m.mesh.r(i);
            (m.du[i] - shift * m.u[i]).norm_sqr() + m.lambda_ang / (r * r) * m.u[i].norm_sqr()
        };
        let r_ = |i: usize| m.mesh.r(i);
        a.lhs.add(0.5 * m.int(|i| r_(i) * sq(i).norm_sqr()));
        a.lhs.add(eps / (4.0 * k) * m.int(|i| r_(i).powi(2) * shifted(i)));
        a.rhs.add(d * eps / (4.0 * k) * m.int(|i| m.u[i].norm_sqr()));
        a.rhs.add(-0.5 * m.int_f(|i, f| r_(i).powi(2) * (f * (m.du[i] - shift * m.u[i]).conj()).re));
        a.rhs.add(-0.25 * dm1 * m.int_f(|i, f| r_(i) * (f * m.u[i].conj()).re));
        a.rhs.add(-eps / (4.0 * k) * m.int_f(|i, f| r_(i).powi(2) * (f * m.u[i].conj()).re));
        a.boundary(-dm1 / 8.0, |i| m.rho[i] * m.u[i].norm_sqr(), m.last());
        a.boundary(eps / (4.0 * k), |i| m.rho[i] * r_(i) * m.u[i].norm_sqr(), m.last());
    }
    // The remaining surface terms are half of the key identity's.
    let half_key_inner = 0.5 * (key.boundary_correction - key.boundary_outer);
    a.inner += half_key_inner;
    a.outer += 0.5 * key.boundary_outer;
    Ok(a.finish("alpha1"))
}
