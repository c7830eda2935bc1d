//! Built-in right-hand sides and angular harmonics.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MaghelmError, Result};
use crate::model::sphere_area;

/// Radial profile `p(r)` of a source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialProfile {
    /// Indicator of `[inner, outer]`, taking the value 1/2 exactly at its end points.
    Annulus { inner: f64, outer: f64 },
    /// `exp(−(r − center)²/width²)`.
    Gaussian { center: f64, width: f64 },
    /// Smooth compactly supported bump on `(inner, outer)` with peak value 1.
    Bump { inner: f64, outer: f64 },
    Zero,
}

impl RadialProfile {
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            RadialProfile::Annulus { inner, outer } => {
                let tol = 1e-12 * r.abs().max(1.0);
                if (r - inner).abs() <= tol || (r - outer).abs() <= tol {
                    0.5
                } else if r > inner && r < outer {
                    1.0
                } else {
                    0.0
                }
            }
            RadialProfile::Gaussian { center, width } => (-((r - center) / width).powi(2)).exp(),
            RadialProfile::Bump { inner, outer } => {
                let s = (2.0 * r - inner - outer) / (outer - inner);
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - s * s)).exp()
                }
            }
            RadialProfile::Zero => 0.0,
        }
    }

    /// Radius beyond which the profile vanishes (Gaussians: below `10⁻²⁷` of the peak).
    pub fn support_radius(&self) -> f64 {
        match *self {
            RadialProfile::Annulus { outer, .. } | RadialProfile::Bump { outer, .. } => outer,
            RadialProfile::Gaussian { center, width } => center + 8.0 * width,
            RadialProfile::Zero => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, RadialProfile::Zero)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RadialProfile::Annulus { inner, outer } | RadialProfile::Bump { inner, outer } => {
                inner >= 0.0 && outer > inner && outer.is_finite()
            }
            RadialProfile::Gaussian { center, width } => center.is_finite() && width > 0.0,
            RadialProfile::Zero => true,
        };
        if ok {
            Ok(())
        } else {
            Err(MaghelmError::InvalidParameter(format!("invalid radial profile {self:?}")))
        }
    }
}

/// One term `coefficient · p(r) · Y_{index,sub}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicTerm {
    pub index: i32,
    #[serde(default)]
    pub sub: i32,
    pub coefficient: f64,
    pub profile: RadialProfile,
}

/// A right-hand side `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    /// `f(x) = p(|x|)`.
    Radial { profile: RadialProfile },
    /// `f = Σ c_j p_j(r) Y_j`.
    Harmonic { terms: Vec<HarmonicTerm> },
}

impl SourceSpec {
    pub fn radial(profile: RadialProfile) -> Self {
        SourceSpec::Radial { profile }
    }

    /// Per-mode terms `(index, sub, coefficient, profile)` in the orthonormal harmonic basis.
    pub fn mode_terms(&self, d: u32) -> Result<Vec<(i32, i32, f64, RadialProfile)>> {
        match self {
            SourceSpec::Radial { profile } => {
                profile.validate()?;
                Ok(vec![(0, 0, sphere_area(d).sqrt(), profile.clone())])
            }
            SourceSpec::Harmonic { terms } => {
                for t in terms {
                    t.profile.validate()?;
                    if d == 3 && (t.index < 0 || t.sub.abs() > t.index) {
                        return Err(MaghelmError::InvalidParameter(format!(
                            "harmonic ({}, {}) is not a valid degree/order pair",
                            t.index, t.sub
                        )));
                    }
                    if d == 2 && t.sub != 0 {
                        return Err(MaghelmError::InvalidParameter("d = 2 harmonics carry no sub-index".into()));
                    }
                }
                Ok(terms.iter().map(|t| (t.index, t.sub, t.coefficient, t.profile.clone())).collect())
            }
        }
    }

    /// Largest support radius over all terms.
    pub fn support_radius(&self) -> f64 {
        match self {
            SourceSpec::Radial { profile } => profile.support_radius(),
            SourceSpec::Harmonic { terms } => terms.iter().map(|t| t.profile.support_radius()).fold(0.0, f64::max),
        }
    }

    /// Smallest radius where the source is non-zero.
    pub fn inner_radius(&self) -> f64 {
        let inner = |p: &RadialProfile| match *p {
            RadialProfile::Annulus { inner, .. } | RadialProfile::Bump { inner, .. } => inner,
            RadialProfile::Gaussian { .. } => 0.0,
            RadialProfile::Zero => f64::INFINITY,
        };
        match self {
            SourceSpec::Radial { profile } => inner(profile),
            SourceSpec::Harmonic { terms } => terms.iter().map(|t| inner(&t.profile)).fold(f64::INFINITY, f64::min),
        }
    }
}

/// Real orthonormal spherical harmonic `Y_ℓ^m(θ, φ)` (`m < 0` uses `sin |m|φ`).
pub fn real_spherical_harmonic(l: i32, m: i32, theta: f64, phi: f64) -> f64 {
    let am = m.unsigned_abs() as i32;
    let x = theta.cos();
    let p = assoc_legendre(l, am, x);
    let mut norm = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt();
    let mut ratio = 1.0;
    for k in (l - am + 1)..=(l + am) {
        ratio *= k as f64;
    }
    norm /= ratio.sqrt();
    if m == 0 {
        norm * p
    } else if m > 0 {
        norm * 2f64.sqrt() * p * (am as f64 * phi).cos()
    } else {
        norm * 2f64.sqrt() * p * (am as f64 * phi).sin()
    }
}

/// Associated Legendre function `P_ℓ^m(x)` without the Condon–Shortley phase.
fn assoc_legendre(l: i32, m: i32, x: f64) -> f64 {
    let mut pmm = 1.0;
    let s = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
    for k in 1..=m {
        pmm *= (2 * k - 1) as f64 * s;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut pll = 0.0;
    for ll in (m + 2)..=l {
        pll = (x * (2 * ll - 1) as f64 * pm1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pm1;
        pm1 = pll;
    }
    pll
}

/// Angular basis function of mode `(index, sub)` at a direction: `Y_ℓ^m(θ, φ)` in `d = 3`,
/// `e^{imθ}/√(2π)` in `d = 2` (where `phi` is ignored).
pub fn harmonic(d: u32, index: i32, sub: i32, theta: f64, phi: f64) -> Complex64 {
    if d == 2 {
        Complex64::from_polar(1.0 / (2.0 * PI).sqrt(), index as f64 * theta)
    } else {
        Complex64::new(real_spherical_harmonic(index, sub, theta, phi), 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;

    #[test]
    fn annulus_takes_half_at_jumps() {
        let p = RadialProfile::Annulus { inner: 1.0, outer: 2.0 };
        assert_eq!(p.value(1.0), 0.5);
        assert_eq!(p.value(1.5), 1.0);
        assert_eq!(p.value(2.0), 0.5);
        assert_eq!(p.value(2.5), 0.0);
    }

    #[test]
    fn bump_is_smooth_and_peaked() {
        let p = RadialProfile::Bump { inner: 1.0, outer: 2.0 };
        assert!((p.value(1.5) - 1.0).abs() < 1e-15);
        assert_eq!(p.value(1.0), 0.0);
        assert!(p.value(1.001) < 1e-100);
    }

    #[test]
    fn spherical_harmonics_are_orthonormal() {
        let (x, w) = gauss_legendre(16);
        let nphi = 32;
        let modes: Vec<(i32, i32)> = (0..=3).flat_map(|l| (-l..=l).map(move |m| (l, m))).collect();
        for &(l1, m1) in &modes {
            for &(l2, m2) in &modes {
                let mut s = 0.0;
                for (xi, wi) in x.iter().zip(&w) {
                    let theta = xi.acos();
                    for k in 0..nphi {
                        let phi = 2.0 * PI * k as f64 / nphi as f64;
                        s += wi * (2.0 * PI / nphi as f64)
                            * real_spherical_harmonic(l1, m1, theta, phi)
                            * real_spherical_harmonic(l2, m2, theta, phi);
                    }
                }
                let expect = if (l1, m1) == (l2, m2) { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-12, "({l1},{m1}) ({l2},{m2}) {s}");
            }
        }
    }

    #[test]
    fn radial_source_is_mode_zero_with_sphere_normalization() {
        let f = SourceSpec::radial(RadialProfile::Annulus { inner: 1.0, outer: 2.0 });
        let terms = f.mode_terms(3).unwrap();
        assert_eq!(terms.len(), 1);
        assert!((terms[0].2 - (4.0 * PI).sqrt()).abs() < 1e-15);
    }
}
