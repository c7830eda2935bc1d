//! Bessel `J_ν` and Hankel `H¹_ν` for real order `ν ≥ 0` and complex argument.
//!
//! Power series for `|z| ≤ 12`, large-argument asymptotic series beyond.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{MaghelmError, Result};

/// Radius at which evaluation switches from the power series to the asymptotic series.
pub const SWITCH_RADIUS: f64 = 12.0;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const ASYMPTOTIC_TOL: f64 = 1e-9;

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function for real arguments (Lanczos with reflection).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let t = x + 7.5;
        let mut a = LANCZOS[0];
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

fn digamma_int(n: usize) -> f64 {
    (1..n).fold(-EULER_GAMMA, |acc, k| acc + 1.0 / k as f64)
}

fn is_integer(nu: f64) -> bool {
    (nu - nu.round()).abs() < 1e-12
}

fn series_j(nu: f64, z: Complex64) -> Complex64 {
    let half = z * 0.5;
    let q = -half * half;
    let mut term = (half.ln() * nu).exp() / gamma(nu + 1.0);
    let mut sum = term;
    for k in 0..400 {
        let denom = (k as f64 + 1.0) * (k as f64 + 1.0 + nu);
        term = term * q / denom;
        sum += term;
        if term.norm() <= 1e-17 * sum.norm() && k > 2 {
            break;
        }
    }
    sum
}

fn series_j_negative(nu: f64, z: Complex64) -> Complex64 {
    let half = z * 0.5;
    let q = -half * half;
    let mut term = (half.ln() * (-nu)).exp() / gamma(1.0 - nu);
    let mut sum = term;
    for k in 0..400 {
        let denom = (k as f64 + 1.0) * (k as f64 + 1.0 - nu);
        term = term * q / denom;
        sum += term;
        if term.norm() <= 1e-17 * sum.norm() && k as f64 > nu + 2.0 {
            break;
        }
    }
    sum
}

fn series_y_integer(n: usize, z: Complex64) -> Complex64 {
    let half = z * 0.5;
    let q = half * half;
    let mut head = Complex64::new(0.0, 0.0);
    if n > 0 {
        let mut fact_ratio = (1..n).map(|v| v as f64).product::<f64>();
        let mut pow = Complex64::new(1.0, 0.0);
        for k in 0..n {
            head += pow * fact_ratio;
            if k + 1 < n {
                fact_ratio /= ((n - k - 1) as f64) * ((k + 1) as f64);
                pow *= q;
            }
        }
        head = -head * half.powf(-(n as f64)) / PI;
    }
    let log_term = half.ln() * series_j(n as f64, z) * (2.0 / PI);
    let mut term = Complex64::new(1.0 / (1..=n).map(|v| v as f64).product::<f64>(), 0.0);
    let mut psi_a = digamma_int(1);
    let mut psi_b = digamma_int(n + 1);
    let mut tail = term * (psi_a + psi_b);
    for k in 0..400 {
        let kk = k as f64 + 1.0;
        term = term * (-q) / (kk * (kk + n as f64));
        psi_a += 1.0 / kk;
        psi_b += 1.0 / (kk + n as f64);
        let add = term * (psi_a + psi_b);
        tail += add;
        if add.norm() <= 1e-17 * tail.norm() && k > 2 {
            break;
        }
    }
    let tail = -tail * half.powf(n as f64) / PI;
    head + log_term + tail
}

/// Sum of `Σ (±i)^k a_k(ν)/z^k` with the smallest-term truncation rule.
fn asymptotic_sum(nu: f64, z: Complex64, plus: bool) -> Result<Complex64> {
    let mu = 4.0 * nu * nu;
    let unit = if plus { Complex64::i() } else { -Complex64::i() };
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let j = (2 * k - 1) as f64;
        let next = term * unit * (mu - j * j) / (k as f64 * 8.0 * z);
        let size = next.norm();
        if size >= last {
            break;
        }
        sum += next;
        term = next;
        last = size;
        if size <= 1e-17 * sum.norm() {
            return Ok(sum);
        }
    }
    if last > ASYMPTOTIC_TOL * sum.norm() {
        return Err(MaghelmError::BesselRange { nu, z_abs: z.norm() });
    }
    Ok(sum)
}

fn asymptotic_prefactor(z: Complex64) -> Complex64 {
    (Complex64::new(2.0 / PI, 0.0) / z).sqrt()
}

fn asymptotic_phase(nu: f64, z: Complex64) -> Complex64 {
    z - nu * PI / 2.0 - PI / 4.0
}

fn check(nu: f64, z: Complex64) -> Result<()> {
    if !(nu >= 0.0) || !nu.is_finite() || z.norm() == 0.0 || !z.re.is_finite() || !z.im.is_finite() {
        return Err(MaghelmError::BesselRange { nu, z_abs: z.norm() });
    }
    Ok(())
}

/// `J_ν(z)`.
pub fn bessel_j(nu: f64, z: Complex64) -> Result<Complex64> {
    check(nu, z)?;
    if z.norm() <= SWITCH_RADIUS {
        return Ok(series_j(nu, z));
    }
    let pre = asymptotic_prefactor(z);
    let w = asymptotic_phase(nu, z);
    let h1 = pre * (Complex64::i() * w).exp() * asymptotic_sum(nu, z, true)?;
    let h2 = pre * (-Complex64::i() * w).exp() * asymptotic_sum(nu, z, false)?;
    Ok((h1 + h2) * 0.5)
}

/// `Y_ν(z)`.
pub fn bessel_y(nu: f64, z: Complex64) -> Result<Complex64> {
    check(nu, z)?;
    if z.norm() <= SWITCH_RADIUS {
        return Ok(series_y(nu, z));
    }
    let pre = asymptotic_prefactor(z);
    let w = asymptotic_phase(nu, z);
    let h1 = pre * (Complex64::i() * w).exp() * asymptotic_sum(nu, z, true)?;
    let h2 = pre * (-Complex64::i() * w).exp() * asymptotic_sum(nu, z, false)?;
    Ok((h1 - h2) / (Complex64::i() * 2.0))
}

fn series_y(nu: f64, z: Complex64) -> Complex64 {
    if is_integer(nu) {
        series_y_integer(nu.round() as usize, z)
    } else {
        let (s, c) = (nu * PI).sin_cos();
        (series_j(nu, z) * c - series_j_negative(nu, z)) / s
    }
}

/// `H¹_ν(z) = J_ν(z) + i Y_ν(z)`.
pub fn hankel1(nu: f64, z: Complex64) -> Result<Complex64> {
    check(nu, z)?;
    if z.norm() <= SWITCH_RADIUS {
        return Ok(series_j(nu, z) + Complex64::i() * series_y(nu, z));
    }
    let pre = asymptotic_prefactor(z);
    let w = asymptotic_phase(nu, z);
    Ok(pre * (Complex64::i() * w).exp() * asymptotic_sum(nu, z, true)?)
}

/// `J′_ν(z) = (ν/z) J_ν(z) − J_{ν+1}(z)`.
pub fn bessel_j_prime(nu: f64, z: Complex64) -> Result<Complex64> {
    Ok(bessel_j(nu, z)? * nu / z - bessel_j(nu + 1.0, z)?)
}

/// `H¹′_ν(z) = (ν/z) H¹_ν(z) − H¹_{ν+1}(z)`.
pub fn hankel1_prime(nu: f64, z: Complex64) -> Result<Complex64> {
    Ok(hankel1(nu, z)? * nu / z - hankel1(nu + 1.0, z)?)
}

/// `H¹′_ν(z) / H¹_ν(z)`, evaluated without forming either factor at large `|z|`.
pub fn hankel1_log_derivative(nu: f64, z: Complex64) -> Result<Complex64> {
    check(nu, z)?;
    if z.norm() <= SWITCH_RADIUS {
        let h = hankel1(nu, z)?;
        return Ok(nu / z - hankel1(nu + 1.0, z)? / h);
    }
    let ratio = -Complex64::i() * asymptotic_sum(nu + 1.0, z, true)? / asymptotic_sum(nu, z, true)?;
    Ok(nu / z - ratio)
}
