//! Far-field traces, cross-sections and the spectral reconstruction of `‖f‖²`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MaghelmError, Result};
use crate::model::{validate_spec, ProblemSpec, RadialField, RadialMesh};
use crate::norms::{f_fields, log_slope, pairing, u_fields, weighted_l2};
use crate::potentials::PotentialSpec;
use crate::quadrature::gauss_legendre;
use crate::radial_solver::{resolve_on, ModeSolution};
use crate::source::{harmonic, SourceSpec};

/// One harmonic coefficient of a function on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicCoefficient {
    pub index: i32,
    pub sub: i32,
    pub value: Complex64,
}

/// Far-field coefficients over a radii window and the cross-section they converge to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarFieldResult {
    pub lambda: f64,
    pub d: u32,
    /// `(index, sub)` of each mode, aligned with the coefficient columns.
    pub modes: Vec<(i32, i32)>,
    pub radii: Vec<f64>,
    /// `coefficients[j][m]` is the mode-`m` coefficient of `F(λ, radii[j])f`.
    pub coefficients: Vec<Vec<Complex64>>,
    /// Extrapolated `r → ∞` coefficients.
    pub limit: Vec<Complex64>,
    /// Harmonic expansion of `G_λ = |F|²` built from `limit`.
    pub g_coefficients: Vec<HarmonicCoefficient>,
    /// `∫ G_λ dσ` read off the constant harmonic.
    pub sphere_mass: f64,
    /// `λ^{1/2} Im ∫ f ū` by radial quadrature.
    pub mass: f64,
    /// Log-log slope of successive coefficient differences against `r`.
    pub convergence_rate: f64,
}

impl FarFieldResult {
    /// `G_λ(ω)` evaluated from its harmonic expansion.
    pub fn g_value(&self, theta: f64, phi: f64) -> f64 {
        self.g_coefficients
            .iter()
            .map(|c| c.value * harmonic(self.d, c.index, c.sub, theta, phi))
            .sum::<Complex64>()
            .re
    }

    /// `min G / max G` over a sample grid of directions.
    pub fn min_sample_ratio(&self, samples: usize) -> f64 {
        let n = samples.max(4);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let theta = if self.d == 2 { 2.0 * PI * i as f64 / n as f64 } else { PI * (i as f64 + 0.5) / n as f64 };
            let nphi = if self.d == 2 { 1 } else { 2 * n };
            for j in 0..nphi {
                let v = self.g_value(theta, 2.0 * PI * j as f64 / nphi as f64);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if hi <= 0.0 {
            return 0.0;
        }
        lo / hi
    }
}

fn require_positive_lambda(sols: &[ModeSolution]) -> Result<f64> {
    let lambda = sols.first().map_or(1.0, |s| s.spec.lambda);
    if !(lambda > 0.0) {
        return Err(MaghelmError::InvalidParameter("far-field traces need lambda > 0".into()));
    }
    Ok(lambda)
}

/// Per-mode coefficients `√λ r^{(d−1)/2} e^{−i√λ r} u_mode(r)` at a mesh node `r`.
pub fn sphere_trace(sols: &[ModeSolution], r: f64) -> Result<Vec<Complex64>> {
    let lambda = require_positive_lambda(sols)?;
    let Some(first) = sols.first() else { return Ok(Vec::new()) };
    let i = first.mesh().index_of(r).ok_or(MaghelmError::OffMesh(r))?;
    let k = lambda.sqrt();
    let scale = Complex64::from_polar(k * r.powf(first.spec.half_weight()), -k * r);
    Ok(sols.iter().map(|s| s.u.values[i] * scale).collect())
}

/// Sphere pairings `∫_{|x|=r} (D_r u) v̄ dσ` with `D_r = ∂_r^A − i√λ + (d−1)/(2r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrTrace {
    pub radii: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Log-log slope of `|values|` over the last decade of radii.
    pub decay_slope: f64,
}

/// Evaluates the `D_r` flux of `u` against `v` (aligned per mode) at mesh radii.
pub fn dr_flux(sols: &[ModeSolution], v: &[RadialField], radii: &[f64]) -> Result<DrTrace> {
    if sols.len() != v.len() {
        return Err(MaghelmError::LengthMismatch { expected: sols.len(), got: v.len() });
    }
    let lambda = require_positive_lambda(sols)?;
    let k = lambda.sqrt();
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut total = Complex64::new(0.0, 0.0);
        for (s, vf) in sols.iter().zip(v) {
            let i = s.mesh().index_of(r).ok_or(MaghelmError::OffMesh(r))?;
            let d = s.spec.d as f64;
            let dru = s.du.values[i] + s.u.values[i] * Complex64::new((d - 1.0) / (2.0 * r), -k);
            total += dru * vf.to_plain().values[i].conj() * r.powf(d - 1.0);
        }
        values.push(total);
    }
    let last = radii.last().copied().unwrap_or(0.0);
    let (xs, ys): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(&values)
        .filter(|(r, v)| **r >= 0.1 * last && v.norm() > 0.0)
        .map(|(r, v)| (*r, v.norm()))
        .unzip();
    let decay_slope = if xs.len() >= 2 { log_slope(&xs, &ys) } else { f64::NAN };
    Ok(DrTrace { radii: radii.to_vec(), values, decay_slope })
}

/// Radii `r_max/2^j` (ascending) that are mesh nodes beyond `support`, at most `count` of them.
pub fn dyadic_window(mesh: &RadialMesh, support: f64, count: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..64)
        .map(|j| mesh.r_max() / 2f64.powi(j))
        .take_while(|&r| r > support)
        .filter(|&r| mesh.index_of(r).is_some())
        .take(count)
        .collect();
    out.reverse();
    out
}

/// Largest radius where any `f` mode is non-zero.
pub fn support_radius(fs: &[RadialField]) -> f64 {
    fs.iter()
        .filter_map(|f| f.values.iter().rposition(|v| v.norm() > 0.0).map(|i| f.mesh.r(i)))
        .fold(0.0, f64::max)
}

/// Polynomial extrapolation of `(x_j, y_j)` to `x = 0` (Neville).
fn neville_at_zero(x: &[f64], y: &[Complex64]) -> Complex64 {
    let mut p = y.to_vec();
    let n = x.len();
    for level in 1..n {
        for i in 0..n - level {
            let (xa, xb) = (x[i], x[i + level]);
            p[i] = (p[i + 1] * xa - p[i] * xb) / (xa - xb);
        }
    }
    p[0]
}

/// Angular rule exact for polynomials of degree `degree` on the sphere: `(θ, φ, weight)`.
fn exact_sphere_rule(d: u32, degree: usize) -> Vec<(f64, f64, f64)> {
    let nphi = degree + 2;
    let wphi = 2.0 * PI / nphi as f64;
    if d == 2 {
        return (0..nphi).map(|j| (j as f64 * wphi, 0.0, wphi)).collect();
    }
    let (x, w) = gauss_legendre(degree / 2 + 2);
    x.iter()
        .zip(&w)
        .flat_map(|(xi, wi)| (0..nphi).map(move |j| (xi.acos(), j as f64 * wphi, wi * wphi)))
        .collect()
}

/// Harmonic expansion of `|Σ_m c_m Y_m|²` by exact projection onto degrees up to twice the cutoff.
fn expand_intensity(d: u32, modes: &[(i32, i32)], coef: &[Complex64], cutoff: i32) -> Vec<HarmonicCoefficient> {
    let top = 2 * cutoff;
    let rule = exact_sphere_rule(d, 4 * top.max(1) as usize);
    let samples: Vec<f64> = rule
        .iter()
        .map(|&(t, p, _)| {
            modes
                .iter()
                .zip(coef)
                .map(|(&(i, s), c)| c * harmonic(d, i, s, t, p))
                .sum::<Complex64>()
                .norm_sqr()
        })
        .collect();
    let targets: Vec<(i32, i32)> = if d == 2 {
        (-top..=top).map(|n| (n, 0)).collect()
    } else {
        (0..=top).flat_map(|l| (-l..=l).map(move |m| (l, m))).collect()
    };
    targets
        .into_iter()
        .map(|(index, sub)| {
            let value = rule
                .iter()
                .zip(&samples)
                .map(|(&(t, p, w), g)| harmonic(d, index, sub, t, p).conj() * (g * w))
                .sum();
            HarmonicCoefficient { index, sub, value }
        })
        .collect()
}

/// Far-field coefficients over `radii`, their extrapolated limit and the cross-section mass.
///
/// `fs` are the plain source fields aligned with `sols`; every radius must be a mesh node
/// strictly beyond the support of `f`.
pub fn cross_section(sols: &[ModeSolution], fs: &[RadialField], radii: &[f64]) -> Result<FarFieldResult> {
    let lambda = require_positive_lambda(sols)?;
    if radii.is_empty() {
        return Err(MaghelmError::EmptyGrid);
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MaghelmError::InvalidParameter("radii must increase".into()));
    }
    let support = support_radius(fs);
    if radii[0] <= support {
        return Err(MaghelmError::WindowOverlapsSupport { radius: radii[0], support });
    }
    let d = sols.first().map_or(3, |s| s.spec.d);
    let cutoff = sols.iter().map(|s| s.mode.index.abs()).max().unwrap_or(0);
    let modes: Vec<(i32, i32)> = sols.iter().map(|s| s.mode.key()).collect();
    let coefficients = radii.iter().map(|&r| sphere_trace(sols, r)).collect::<Result<Vec<_>>>()?;
    let inv: Vec<f64> = radii.iter().map(|r| 1.0 / r).collect();
    let limit: Vec<Complex64> = (0..modes.len())
        .map(|m| {
            let col: Vec<Complex64> = coefficients.iter().map(|c| c[m]).collect();
            neville_at_zero(&inv, &col)
        })
        .collect();
    let g_coefficients = expand_intensity(d, &modes, &limit, cutoff);
    let y0 = harmonic(d, 0, 0, 0.0, 0.0).re;
    let sphere_mass = g_coefficients
        .iter()
        .find(|c| c.index == 0 && c.sub == 0)
        .map_or(0.0, |c| c.value.re / y0);
    let mass = lambda.sqrt() * pairing(fs, &u_fields(sols))?.im;
    let diffs: Vec<(f64, f64)> = coefficients
        .windows(2)
        .zip(radii.windows(2))
        .map(|(c, r)| {
            let step: f64 = c[0].iter().zip(&c[1]).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            (r[1], step)
        })
        .filter(|&(_, s)| s > 1e-13)
        .collect();
    let convergence_rate = if diffs.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = diffs.into_iter().unzip();
        log_slope(&x, &y)
    } else {
        f64::NAN
    };
    Ok(FarFieldResult {
        lambda,
        d,
        modes,
        radii: radii.to_vec(),
        coefficients,
        limit,
        g_coefficients,
        sphere_mass,
        mass,
        convergence_rate,
    })
}

/// Composite rule in `ln λ` for the spectral integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralRule {
    TrapezoidLog,
    SimpsonLog,
}

/// Stone-formula reconstruction of `‖f‖²` from per-λ cross-section masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReconstruction {
    pub lambdas: Vec<f64>,
    /// `μ_λ(S^{d−1}) = λ^{1/2} Im ∫ f ū_λ` at each grid point.
    pub masses: Vec<f64>,
    pub reconstructed: f64,
    pub actual: f64,
    /// Estimated fraction of the spectral mass inside the grid (1 minus extrapolated tails).
    pub coverage: f64,
    pub warning: Option<String>,
}

impl SpectralReconstruction {
    pub fn ratio(&self) -> f64 {
        if self.actual == 0.0 {
            return if self.reconstructed == 0.0 { 1.0 } else { f64::INFINITY };
        }
        self.reconstructed / self.actual
    }
}

/// Coverage below this fraction triggers a warning.
pub const COVERAGE_THRESHOLD: f64 = 0.99;

/// `(1/π) ∫ λ^{−1/2} μ_λ(S^{d−1}) dλ` over the grid, compared with `∫|f|²`.
///
/// Each λ is solved at `ε = 0` on the default mesh of `base`'s truncation. The tails beyond the
/// grid are estimated from the end-point integrands (`λ^{d/2}` below, one log-step above).
pub fn spectral_reconstruction(
    spec: &PotentialSpec,
    f: &SourceSpec,
    base: &ProblemSpec,
    lambdas: &[f64],
    rule: SpectralRule,
) -> Result<SpectralReconstruction> {
    if lambdas.len() < 2 {
        return Err(MaghelmError::EmptyGrid);
    }
    if lambdas[0] <= 0.0 || lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MaghelmError::InvalidParameter("lambda grid must be positive and increasing".into()));
    }
    let template = validate_spec(ProblemSpec { lambda: lambdas[0], epsilon: 0.0, ..*base })?;
    let mesh = Arc::new(RadialMesh::default_for(&template)?);
    let per: Vec<(f64, f64)> = lambdas
        .par_iter()
        .map(|&lambda| {
            let problem = ProblemSpec { lambda, epsilon: 0.0, ..template };
            let sols = resolve_on(spec, f, &problem, &mesh)?;
            let fs = f_fields(&sols);
            let mass = lambda.sqrt() * pairing(&fs, &u_fields(&sols))?.im;
            Ok((mass, weighted_l2(&fs, 0.0)))
        })
        .collect::<Result<Vec<_>>>()?;
    let masses: Vec<f64> = per.iter().map(|p| p.0).collect();
    let actual = per.first().map_or(0.0, |p| p.1);
    // Integrand in d(ln λ): λ · λ^{−1/2} μ_λ / π.
    let j: Vec<f64> = lambdas.iter().zip(&masses).map(|(l, m)| l.sqrt() * m / PI).collect();
    let t: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let reconstructed = match rule {
        SpectralRule::TrapezoidLog => trapezoid(&t, &j),
        SpectralRule::SimpsonLog => simpson(&t, &j),
    };
    let n = j.len();
    let half_d = base.d as f64 / 2.0;
    let low_tail = j[0].max(0.0) / (half_d + 0.5);
    let high_tail = j[n - 1].max(0.0) * (t[n - 1] - t[n - 2]);
    let total = reconstructed + low_tail + high_tail;
    let coverage = if total > 0.0 { reconstructed / total } else { 1.0 };
    let warning = (coverage < COVERAGE_THRESHOLD).then(|| {
        format!(
            "lambda grid [{}, {}] covers an estimated {:.2}% of the spectral mass",
            lambdas[0],
            lambdas[n - 1],
            100.0 * coverage
        )
    });
    Ok(SpectralReconstruction { lambdas: lambdas.to_vec(), masses, reconstructed, actual, coverage, warning })
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1])).sum()
}

/// Composite Simpson on non-uniform nodes, with a trapezoid on a left-over last cell.
fn simpson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < n {
        let (h0, h1) = (x[i + 1] - x[i], x[i + 2] - x[i + 1]);
        let s = h0 + h1;
        total += s / 6.0 * ((2.0 - h1 / h0) * y[i] + s * s / (h0 * h1) * y[i + 1] + (2.0 - h0 / h1) * y[i + 2]);
        i += 2;
    }
    if i + 1 < n {
        total += 0.5 * (x[i + 1] - x[i]) * (y[i] + y[i + 1]);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::hankel1;
    use crate::model::Sign;
    use crate::potentials::{build_example, PotentialKind};
    use crate::source::{HarmonicTerm, RadialProfile};

    fn solve(spec: &PotentialSpec, f: &SourceSpec, p: &ProblemSpec) -> Vec<ModeSolution> {
        let mesh = Arc::new(RadialMesh::default_for(p).unwrap());
        resolve_on(spec, f, p, &mesh).unwrap()
    }

    fn annulus() -> SourceSpec {
        SourceSpec::radial(RadialProfile::Annulus { inner: 1.0, outer: 2.0 })
    }

    fn two_mode() -> SourceSpec {
        SourceSpec::Harmonic {
            terms: vec![
                HarmonicTerm { index: 0, sub: 0, coefficient: 1.0, profile: RadialProfile::Annulus { inner: 1.0, outer: 2.0 } },
                HarmonicTerm { index: 1, sub: 0, coefficient: 0.8, profile: RadialProfile::Bump { inner: 0.5, outer: 3.0 } },
            ],
        }
    }

    #[test]
    fn zero_solution_has_zero_trace_and_flux() {
        let p = ProblemSpec::new(3, 1.0, 0.0);
        let sols = solve(&PotentialSpec::free(3), &SourceSpec::radial(RadialProfile::Zero), &p);
        assert!(sphere_trace(&sols, 8.0).unwrap().iter().all(|c| c.norm() == 0.0));
        let v = u_fields(&sols);
        assert!(dr_flux(&sols, &v, &[8.0, 16.0]).unwrap().values.iter().all(|c| c.norm() == 0.0));
        assert!(sphere_trace(&sols, 8.01).is_err());
    }

    #[test]
    fn trace_satisfies_parseval() {
        let p = ProblemSpec::new(3, 2.0, 0.0).with_cutoff(2);
        let sols = solve(&PotentialSpec::free(3), &two_mode(), &p);
        let c = sphere_trace(&sols, 16.0).unwrap();
        let lhs: f64 = c.iter().map(|v| v.norm_sqr()).sum();
        let i = sols[0].mesh().index_of(16.0).unwrap();
        let rhs: f64 = 2.0 * 16.0f64.powi(2) * sols.iter().map(|s| s.u.values[i].norm_sqr()).sum::<f64>();
        assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }

    #[test]
    fn free_trace_is_constant_beyond_the_source() {
        let p = ProblemSpec::new(3, 1.0, 0.0);
        let sols = solve(&PotentialSpec::free(3), &annulus(), &p);
        let c: Vec<f64> = [8.0, 16.0, 32.0, 64.0].iter().map(|&r| sphere_trace(&sols, r).unwrap()[0].norm()).collect();
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(0.0, f64::max);
        assert!((hi - lo) / hi <= 1e-3, "{c:?}");
    }

    #[test]
    fn trace_decays_at_the_damping_rate() {
        let p = ProblemSpec::new(3, 1.0, 0.05);
        let sols = solve(&PotentialSpec::free(3), &annulus(), &p);
        let radii = [8.0, 16.0, 24.0, 32.0, 40.0];
        let logs: Vec<f64> = radii.iter().map(|&r| sphere_trace(&sols, r).unwrap()[0].norm().ln()).collect();
        let n = radii.len() as f64;
        let mx = radii.iter().sum::<f64>() / n;
        let my = logs.iter().sum::<f64>() / n;
        let slope = radii.iter().zip(&logs).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / radii.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        let expect = -p.k().im;
        assert!((slope - expect).abs() <= 0.05 * expect.abs(), "{slope} vs {expect}");
    }

    #[test]
    fn extrapolated_limit_matches_hankel_asymptotics() {
        // Outgoing mode-1 solution beyond the support is c·h₁(kr), and kr·h₁(kr)e^{−ikr} → −1.
        let p = ProblemSpec::new(3, 1.0, 0.0).with_cutoff(1);
        let f = SourceSpec::Harmonic {
            terms: vec![HarmonicTerm { index: 1, sub: 0, coefficient: 1.0, profile: RadialProfile::Bump { inner: 1.0, outer: 2.0 } }],
        };
        let sols = solve(&PotentialSpec::free(3), &f, &p);
        let r = 8.0;
        let i = sols[0].mesh().index_of(r).unwrap();
        let h = |x: f64| hankel1(1.5, Complex64::new(x, 0.0)).unwrap() * (PI / (2.0 * x)).sqrt();
        let c = sols[0].u.values[i] / h(r);
        let res = cross_section(&sols, &f_fields(&sols), &[8.0, 16.0, 32.0, 64.0]).unwrap();
        let exact = -c;
        assert!((res.limit[0] - exact).norm() <= 1e-6 * exact.norm(), "{} vs {}", res.limit[0], exact);
        assert!(res.convergence_rate < -0.9, "{}", res.convergence_rate);
    }

    #[test]
    fn one_mode_cross_section_is_isotropic_and_balances_mass() {
        let p = ProblemSpec::new(3, 1.0, 0.0).with_truncation(1e-3, 256.0);
        let sols = solve(&PotentialSpec::free(3), &annulus(), &p);
        let fs = f_fields(&sols);
        let window = dyadic_window(sols[0].mesh(), support_radius(&fs), 8);
        let res = cross_section(&sols, &fs, &window).unwrap();
        let a = res.g_value(0.3, 1.0);
        let b = res.g_value(2.0, 4.0);
        assert!((a - b).abs() <= 1e-10 * a);
        let direct = res.limit[0].norm_sqr();
        assert!((res.sphere_mass - direct).abs() <= 1e-10 * direct);
        assert!((res.sphere_mass - res.mass).abs() <= 1e-3 * res.mass, "{} vs {}", res.sphere_mass, res.mass);
    }

    #[test]
    fn two_mode_cross_section_balances_mass() {
        for spec in [PotentialSpec::free(3)] {
            let p = ProblemSpec::new(3, 2.0, 0.0).with_cutoff(2).with_truncation(1e-3, 256.0);
            let sols = solve(&spec, &two_mode(), &p);
            let fs = f_fields(&sols);
            let window = dyadic_window(sols[0].mesh(), support_radius(&fs), 8);
            let res = cross_section(&sols, &fs, &window).unwrap();
            assert!((res.sphere_mass - res.mass).abs() <= 1e-3 * res.mass, "{} vs {}", res.sphere_mass, res.mass);
            assert!(res.min_sample_ratio(24) >= -1e-6);
            let spread = (res.g_value(0.2, 0.0) - res.g_value(2.9, 0.0)).abs();
            assert!(spread > 1e-3 * res.g_value(0.2, 0.0), "G should depend on direction");
        }
    }

    #[test]
    fn aharonov_bohm_cross_section_balances_mass() {
        let spec = build_example(PotentialKind::AharonovBohm { alpha: 0.5 }, 2).unwrap();
        let f = SourceSpec::Harmonic {
            terms: vec![
                HarmonicTerm { index: 0, sub: 0, coefficient: 1.0, profile: RadialProfile::Bump { inner: 0.5, outer: 2.0 } },
                HarmonicTerm { index: -1, sub: 0, coefficient: 0.6, profile: RadialProfile::Bump { inner: 0.5, outer: 2.0 } },
            ],
        };
        let p = ProblemSpec::new(2, 1.5, 0.0).with_cutoff(1).with_truncation(1e-3, 256.0);
        let sols = solve(&spec, &f, &p);
        let fs = f_fields(&sols);
        let window = dyadic_window(sols[0].mesh(), support_radius(&fs), 8);
        let res = cross_section(&sols, &fs, &window).unwrap();
        assert!((res.sphere_mass - res.mass).abs() <= 1e-3 * res.mass, "{} vs {}", res.sphere_mass, res.mass);
    }

    #[test]
    fn window_shift_leaves_mass_unchanged() {
        let p = ProblemSpec::new(3, 2.0, 0.0).with_cutoff(2).with_truncation(1e-3, 256.0);
        let sols = solve(&PotentialSpec::free(3), &two_mode(), &p);
        let fs = f_fields(&sols);
        let a = cross_section(&sols, &fs, &[8.0, 16.0, 32.0, 64.0, 128.0]).unwrap();
        let b = cross_section(&sols, &fs, &[16.0, 32.0, 64.0, 128.0, 256.0]).unwrap();
        assert!((a.sphere_mass - b.sphere_mass).abs() <= 1e-3 * a.sphere_mass);
    }

    #[test]
    fn window_inside_support_is_rejected() {
        let p = ProblemSpec::new(3, 1.0, 0.0);
        let sols = solve(&PotentialSpec::free(3), &annulus(), &p);
        let err = cross_section(&sols, &f_fields(&sols), &[2.0, 4.0]).unwrap_err();
        assert!(matches!(err, MaghelmError::WindowOverlapsSupport { .. }));
    }

    #[test]
    fn zero_source_has_zero_measure() {
        let p = ProblemSpec::new(3, 1.0, 0.0);
        let sols = solve(&PotentialSpec::free(3), &SourceSpec::radial(RadialProfile::Zero), &p);
        let res = cross_section(&sols, &f_fields(&sols), &[8.0, 16.0]).unwrap();
        assert_eq!(res.mass, 0.0);
        assert_eq!(res.sphere_mass, 0.0);
    }

    #[test]
    fn outgoing_flux_decays_and_incoming_does_not() {
        let p = ProblemSpec::new(3, 1.0, 0.0).with_cutoff(2);
        let radii: Vec<f64> = (1..=8).map(|j| 6.0 + 7.0 * j as f64).collect();
        let out = solve(&PotentialSpec::free(3), &two_mode(), &p);
        let t = dr_flux(&out, &u_fields(&out), &radii).unwrap();
        assert!(t.values.windows(2).all(|w| w[1].norm() < w[0].norm()), "{:?}", t.values);
        assert!(t.decay_slope < -0.8, "{}", t.decay_slope);
        let inc = solve(&PotentialSpec::free(3), &two_mode(), &p.with_sign(Sign::Minus));
        let t = dr_flux(&inc, &u_fields(&inc), &radii).unwrap();
        assert!(t.decay_slope.abs() < 0.1, "{}", t.decay_slope);
    }

    #[test]
    fn bump_is_reconstructed_from_its_spectral_measure() {
        let f = SourceSpec::radial(RadialProfile::Bump { inner: 1.0, outer: 2.0 });
        let base = ProblemSpec::new(3, 1.0, 0.0);
        let grid: Vec<f64> = (0..64).map(|j| 1e-2 * (4e4f64).powf(j as f64 / 63.0)).collect();
        let rec = spectral_reconstruction(&PotentialSpec::free(3), &f, &base, &grid, SpectralRule::SimpsonLog).unwrap();
        assert!((0.99..=1.01).contains(&rec.ratio()), "{}", rec.ratio());
        assert!(rec.warning.is_none(), "{:?}", rec.warning);
        let high: Vec<f64> = grid.iter().copied().filter(|&l| l >= 10.0).collect();
        let rec = spectral_reconstruction(&PotentialSpec::free(3), &f, &base, &high, SpectralRule::SimpsonLog).unwrap();
        assert!(rec.ratio() < 1.0 && rec.warning.is_some());
    }

    #[test]
    fn zero_source_reconstructs_to_zero() {
        let f = SourceSpec::radial(RadialProfile::Zero);
        let rec = spectral_reconstruction(&PotentialSpec::free(3), &f, &ProblemSpec::new(3, 1.0, 0.0), &[0.5, 1.0, 2.0], SpectralRule::TrapezoidLog).unwrap();
        assert_eq!(rec.reconstructed, 0.0);
    }

    #[test]
    fn simpson_integrates_quadratics_exactly_on_uneven_nodes() {
        let x = [0.0, 0.3, 1.0, 1.2, 2.0];
        let y: Vec<f64> = x.iter().map(|t| 3.0 * t * t - t + 2.0).collect();
        let exact = 8.0 - 2.0 + 4.0;
        assert!((simpson(&x, &y) - exact).abs() < 1e-12);
    }
}
