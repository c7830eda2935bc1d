//! Weighted norms and functionals evaluated from per-mode data.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MaghelmError, Result};
use crate::model::{sphere_area, RadialField, Sign};
use crate::quadrature;
use crate::radial_solver::ModeSolution;

/// A named norm value with the parameters it was evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub name: String,
    pub value: f64,
    pub params: BTreeMap<String, f64>,
}

impl NormReport {
    pub fn new(name: &str, value: f64, params: &[(&str, f64)]) -> Self {
        NormReport {
            name: name.to_string(),
            value,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

fn plain(f: &RadialField) -> RadialField {
    f.to_plain()
}

/// Nodal densities `Σ_modes |u_mode(r_i)|² r_i^{d−1}` of a bundle.
fn density(fields: &[RadialField]) -> Option<(Vec<f64>, &RadialField)> {
    let first = fields.first()?;
    let rho = first.mode.d as f64 - 1.0;
    let mesh = &first.mesh;
    let mut out = vec![0.0; mesh.len()];
    for f in fields {
        let p = plain(f);
        for (i, v) in p.values.iter().enumerate() {
            out[i] += v.norm_sqr() * mesh.r(i).powf(rho);
        }
    }
    Some((out, first))
}

/// `Σ_modes ∫ r^s |u_mode|² r^{d−1} dr`.
pub fn weighted_l2(fields: &[RadialField], s: f64) -> f64 {
    match density(fields) {
        None => 0.0,
        Some((dens, first)) => first.mesh.integrate_with(|i| dens[i] * first.mesh.r(i).powf(s)),
    }
}

/// Discrete ball integrals `B(R) = Σ_{r_i ≤ R} w_i ρ_i` with their node radii.
fn ball_integrals(fields: &[RadialField]) -> Option<(Vec<f64>, Vec<f64>)> {
    let (dens, first) = density(fields)?;
    let mesh = &first.mesh;
    let mut acc = 0.0;
    let b = mesh.weights().iter().zip(&dens).map(|(w, d)| {
        acc += w * d;
        acc
    });
    Some((mesh.nodes().to_vec(), b.collect()))
}

/// Agmon–Hörmander norm `sup_{R ≥ R₀} (R⁻¹ ∫_{|x|≤R} |u|²)^{1/2}` with the sup over mesh radii.
pub fn ah_norm(fields: &[RadialField], r0: f64) -> f64 {
    let Some((nodes, ball)) = ball_integrals(fields) else { return 0.0 };
    let mut best = 0.0f64;
    if r0 > 0.0 {
        let head = nodes.iter().rposition(|&r| r <= r0).map_or(0.0, |i| ball[i]);
        best = head / r0;
    }
    for (r, b) in nodes.iter().zip(&ball) {
        if *r >= r0 {
            best = best.max(b / r);
        }
    }
    best.sqrt()
}

/// Half-cell masses `(centre, (h/2)·Σ|u|²r^{d−1})` whose sum is the trapezoid integral.
///
/// At recorded jumps each half-cell uses the one-sided limit from its own side.
fn half_cells(fields: &[RadialField]) -> Vec<(f64, f64)> {
    let Some(first) = fields.first() else { return Vec::new() };
    let mesh = &first.mesh;
    let n = mesh.len();
    let rho = first.mode.d as f64 - 1.0;
    let mut out: Vec<(f64, f64)> = (0..n - 1)
        .flat_map(|i| {
            let (a, b) = (mesh.r(i), mesh.r(i + 1));
            [(0.75 * a + 0.25 * b, 0.0), (0.25 * a + 0.75 * b, 0.0)]
        })
        .collect();
    for f in fields {
        let p = plain(f);
        let v = &p.values;
        let jump = |i: usize| i >= 2 && i + 2 < n && f.jumps.binary_search(&i).is_ok();
        for i in 0..n - 1 {
            let h = 0.5 * mesh.spacing(i);
            let right_of_i = if jump(i) { v[i + 1] * 2.0 - v[i + 2] } else { v[i] };
            let left_of_next = if jump(i + 1) { v[i] * 2.0 - v[i - 1] } else { v[i + 1] };
            out[2 * i].1 += h * right_of_i.norm_sqr() * mesh.r(i).powf(rho);
            out[2 * i + 1].1 += h * left_of_next.norm_sqr() * mesh.r(i + 1).powf(rho);
        }
    }
    out
}

/// Dual norm `(R₀∫_{|x|≤R₀}|f|²)^{1/2} + Σ_j (2^{j+1}∫_{C(j)}|f|²)^{1/2}` over dyadic shells
/// `C(j) = [2^j, 2^{j+1})`, starting with the shell that contains `R₀` (or `r_min` when `R₀ = 0`).
pub fn ah_dual(fields: &[RadialField], r0: f64) -> f64 {
    let Some(first) = fields.first() else { return 0.0 };
    let mut head = 0.0;
    let mut shells: BTreeMap<i32, f64> = BTreeMap::new();
    let j0 = r0.max(first.mesh.r_min()).log2().floor() as i32;
    for (r, q) in half_cells(fields) {
        if r0 > 0.0 && r <= r0 {
            head += q;
        }
        let j = r.log2().floor() as i32;
        if j >= j0 {
            *shells.entry(j).or_insert(0.0) += q;
        }
    }
    let tail: f64 = shells.iter().map(|(&j, &s)| (2f64.powi(j + 1) * s).sqrt()).sum();
    (r0 * head).sqrt() + tail
}

/// `|Σ_modes ∫ u f̄ r^{d−1} dr|` for aligned bundles.
pub fn pairing(u: &[RadialField], f: &[RadialField]) -> Result<Complex64> {
    if u.len() != f.len() {
        return Err(MaghelmError::LengthMismatch { expected: u.len(), got: f.len() });
    }
    let mut total = Complex64::new(0.0, 0.0);
    for (a, b) in u.iter().zip(f) {
        let (a, b) = (plain(a), plain(b));
        let mesh = &a.mesh;
        let rho = a.mode.d as f64 - 1.0;
        for i in 0..mesh.len() {
            total += a.values[i] * b.values[i].conj() * mesh.weights()[i] * mesh.r(i).powf(rho);
        }
    }
    Ok(total)
}

/// Radial and tangential magnetic Dirichlet energies of a solution bundle.
pub fn gradient_split(sols: &[ModeSolution]) -> (f64, f64) {
    let mut radial = 0.0;
    let mut tangential = 0.0;
    for s in sols {
        let mesh = s.mesh();
        let rho = s.spec.d as f64 - 1.0;
        let lam = s.op.lambda_ang;
        radial += mesh.integrate_with(|i| s.du.values[i].norm_sqr() * mesh.r(i).powf(rho));
        tangential += mesh.integrate_with(|i| lam * s.u.values[i].norm_sqr() * mesh.r(i).powf(rho - 2.0));
    }
    (radial, tangential)
}

/// `∫_{|x| ≥ R} |∇_A(e^{∓i√λ|x|}u)|²`; the phase sign follows each solution's branch.
pub fn phase_shifted_gradient_beyond(sols: &[ModeSolution], lambda: f64, radius: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(MaghelmError::InvalidParameter("phase-shifted gradient needs lambda > 0".into()));
    }
    let k = lambda.sqrt();
    let mut total = 0.0;
    for s in sols {
        let mesh = s.mesh();
        let rho = s.spec.d as f64 - 1.0;
        let lam = s.op.lambda_ang;
        let shift = Complex64::new(0.0, k * s.spec.sign.factor());
        total += mesh.integrate_with(|i| {
            let r = mesh.r(i);
            if r < radius {
                return 0.0;
            }
            let radial = (s.du.values[i] - shift * s.u.values[i]).norm_sqr();
            (radial + lam / (r * r) * s.u.values[i].norm_sqr()) * r.powf(rho)
        });
    }
    Ok(total)
}

/// `∫ |∇_A(e^{∓i√λ|x|}u)|²` over the whole truncated domain.
pub fn phase_shifted_gradient(sols: &[ModeSolution], lambda: f64) -> Result<f64> {
    phase_shifted_gradient_beyond(sols, lambda, 0.0)
}

/// `∫_{|x| ≥ R} |∇_A u|²`.
pub fn gradient_beyond(sols: &[ModeSolution], radius: f64) -> f64 {
    sols.iter()
        .map(|s| {
            let mesh = s.mesh();
            let rho = s.spec.d as f64 - 1.0;
            let lam = s.op.lambda_ang;
            mesh.integrate_with(|i| {
                let r = mesh.r(i);
                if r < radius {
                    0.0
                } else {
                    (s.du.values[i].norm_sqr() + lam / (r * r) * s.u.values[i].norm_sqr()) * r.powf(rho)
                }
            })
        })
        .sum()
}

/// Both sides `(∫|∂_r|u||², ∫|∇_A u|²)` of the diamagnetic inequality for one mode.
pub fn diamagnetic_sides(sol: &ModeSolution) -> (f64, f64) {
    let mesh = sol.mesh();
    let rho = sol.spec.d as f64 - 1.0;
    let abs: Vec<f64> = sol.u.values.iter().map(|v| v.norm()).collect();
    let d_abs = mesh.derivative_real(&abs);
    let lhs = mesh.integrate_with(|i| d_abs[i].powi(2) * mesh.r(i).powf(rho));
    let (radial, tangential) = gradient_split(std::slice::from_ref(sol));
    (lhs, radial + tangential)
}

/// Extracts the `u` fields of a bundle.
pub fn u_fields(sols: &[ModeSolution]) -> Vec<RadialField> {
    sols.iter().map(|s| s.u.clone()).collect()
}

/// Extracts the `f` fields of a bundle.
pub fn f_fields(sols: &[ModeSolution]) -> Vec<RadialField> {
    sols.iter().map(|s| s.f.clone()).collect()
}

/// Returns the outgoing/incoming sign of a bundle (the first solution's).
pub fn bundle_sign(sols: &[ModeSolution]) -> Sign {
    sols.first().map_or(Sign::Plus, |s| s.spec.sign)
}

/// Morrey–Campanato norm `sup_r (r^{−(d−pα)} ∫_{|x|<r} |V|^p)^{1/p}` of a radial weight.
pub fn morrey_campanato_radial(weight: &dyn Fn(f64) -> f64, d: u32, alpha: f64, p: f64, radii: &[f64]) -> Result<f64> {
    check_mc(alpha, p, radii)?;
    let area = sphere_area(d);
    let df = d as f64;
    let mut best = 0.0f64;
    for &r in radii {
        // t = ln s removes the origin singularity of power-type weights.
        let lr = r.ln();
        let mass = quadrature::integrate(|t| weight(t.exp()).abs().powf(p) * (df * t).exp(), lr - 60.0, lr, 240, 8);
        best = best.max(r.powf(p * alpha - df) * area * mass);
    }
    Ok(best.powf(1.0 / p))
}

/// Axis-aligned box `∏[lo_k, hi_k]` split into `cells_k` midpoint cells per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
}

/// Morrey–Campanato norm of a weight supported in `region`, by midpoint quadrature on its grid.
pub fn morrey_campanato_grid(
    weight: &(dyn Fn(&[f64]) -> f64 + Sync),
    region: &ProbeBox,
    alpha: f64,
    p: f64,
    radii: &[f64],
) -> Result<f64> {
    check_mc(alpha, p, radii)?;
    let d = region.lo.len();
    if region.hi.len() != d || region.cells.len() != d || region.cells.iter().any(|&c| c == 0) {
        return Err(MaghelmError::InvalidParameter("malformed probe box".into()));
    }
    let h: Vec<f64> = (0..d).map(|k| (region.hi[k] - region.lo[k]) / region.cells[k] as f64).collect();
    let vol: f64 = h.iter().product();
    let inner: usize = region.cells[1..].iter().product();
    let mut samples: Vec<(f64, f64)> = (0..region.cells[0])
        .into_par_iter()
        .flat_map_iter(|i0| {
            let h = &h;
            (0..inner).filter_map(move |mut rest| {
                let mut x = vec![0.0; d];
                x[0] = region.lo[0] + (i0 as f64 + 0.5) * h[0];
                for k in 1..d {
                    let ik = rest % region.cells[k];
                    rest /= region.cells[k];
                    x[k] = region.lo[k] + (ik as f64 + 0.5) * h[k];
                }
                let v = weight(&x).abs();
                (v > 0.0).then(|| (x.iter().map(|c| c * c).sum::<f64>().sqrt(), v.powf(p) * vol))
            })
        })
        .collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut prefix = Vec::with_capacity(samples.len());
    let mut acc = 0.0;
    for s in &samples {
        acc += s.1;
        prefix.push(acc);
    }
    let mut best = 0.0f64;
    for &r in radii {
        let n = samples.partition_point(|s| s.0 < r);
        let mass = if n == 0 { 0.0 } else { prefix[n - 1] };
        best = best.max(r.powf(p * alpha - d as f64) * mass);
    }
    Ok(best.powf(1.0 / p))
}

fn check_mc(alpha: f64, p: f64, radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(MaghelmError::EmptyGrid);
    }
    if !(p >= 1.0) || !(alpha > 0.0) || radii.iter().any(|&r| !(r > 0.0)) {
        return Err(MaghelmError::InvalidParameter(format!("invalid Morrey-Campanato parameters alpha={alpha}, p={p}")));
    }
    Ok(())
}

/// Slab weight `ω = R^{−d(1−1/p)} 1_{[0,1]^{d−k} × [R,2R]^k}` and its companion `ω^{1/2}/|x|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabWeight {
    pub d: usize,
    pub k: usize,
    pub p: f64,
    pub radius: f64,
}

impl SlabWeight {
    pub fn amplitude(&self) -> f64 {
        self.radius.powf(-(self.d as f64) * (1.0 - 1.0 / self.p))
    }

    pub fn region(&self, cells_per_axis: usize) -> ProbeBox {
        let mut lo = vec![0.0; self.d];
        let mut hi = vec![1.0; self.d];
        for j in self.d - self.k..self.d {
            lo[j] = self.radius;
            hi[j] = 2.0 * self.radius;
        }
        ProbeBox { lo, hi, cells: vec![cells_per_axis; self.d] }
    }

    pub fn omega(&self, x: &[f64]) -> f64 {
        let region = self.region(1);
        let inside = x.iter().enumerate().all(|(j, &c)| c >= region.lo[j] && c <= region.hi[j]);
        if inside {
            self.amplitude()
        } else {
            0.0
        }
    }

    pub fn omega1(&self, x: &[f64]) -> f64 {
        let n = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        self.omega(x).sqrt() / n
    }
}

/// Norms `‖ω‖_{ℒ^{2,p}}` and `‖ω^{1/2}/|x|‖_{ℒ^{2,q}}` of the slab weight over several `R`,
/// with the least-squares growth exponent of the second in `log R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabScaling {
    pub radii: Vec<f64>,
    pub omega_norms: Vec<f64>,
    pub omega1_norms: Vec<f64>,
    pub omega1_exponent: f64,
    pub omega_exponent: f64,
}

pub fn slab_scaling(d: usize, k: usize, p: f64, q: f64, radii: &[f64], cells_per_axis: usize) -> Result<SlabScaling> {
    if k == 0 || k >= d {
        return Err(MaghelmError::InvalidParameter(format!("need 1 <= k < d, got k={k}, d={d}")));
    }
    let mut omega_norms = Vec::new();
    let mut omega1_norms = Vec::new();
    for &big_r in radii {
        let slab = SlabWeight { d, k, p, radius: big_r };
        let region = slab.region(cells_per_axis);
        let probes: Vec<f64> = (0..=96).map(|j| big_r * 0.5 * 2f64.powf(j as f64 / 24.0)).collect();
        omega_norms.push(morrey_campanato_grid(&|x| slab.omega(x), &region, 2.0, p, &probes)?);
        omega1_norms.push(morrey_campanato_grid(&|x| slab.omega1(x), &region, 2.0, q, &probes)?);
    }
    Ok(SlabScaling {
        radii: radii.to_vec(),
        omega1_exponent: log_slope(radii, &omega1_norms),
        omega_exponent: log_slope(radii, &omega_norms),
        omega_norms,
        omega1_norms,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}
