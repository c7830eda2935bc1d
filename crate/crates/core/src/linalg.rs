//! Banded linear algebra: pivoted tridiagonal LU, the implicit QL eigensolver
//! and a generalized power iteration for extremal Rayleigh quotients.

use num_complex::Complex64;

use crate::error::{MaghelmError, Result};

macro_rules! tridiag_lu {
    ($name:ident, $t:ty, $abs:expr, $zero:expr) => {
        /// LU factors of a tridiagonal matrix with partial pivoting.
        #[derive(Debug, Clone)]
        pub struct $name {
            dl: Vec<$t>,
            d: Vec<$t>,
            du: Vec<$t>,
            du2: Vec<$t>,
            swapped: Vec<bool>,
        }

        impl $name {
            /// Factors the matrix with sub-diagonal `sub`, diagonal `diag`, super-diagonal `sup`.
            /// Returns `None` when a pivot vanishes relative to the matrix scale.
            pub fn factor(sub: &[$t], diag: &[$t], sup: &[$t]) -> Option<Self> {
                let n = diag.len();
                assert!(n >= 1 && sub.len() + 1 == n && sup.len() + 1 == n);
                let abs = $abs;
                let row: Vec<f64> = (0..n)
                    .map(|i| {
                        let mut s = abs(diag[i]);
                        if i > 0 {
                            s += abs(sub[i - 1]);
                        }
                        if i + 1 < n {
                            s += abs(sup[i]);
                        }
                        s
                    })
                    .collect();
                let tiny = |i: usize| 4.0 * f64::EPSILON * row[i].max(if i + 1 < n { row[i + 1] } else { 0.0 });
                let mut dl = sub.to_vec();
                let mut d = diag.to_vec();
                let mut du = sup.to_vec();
                let mut du2 = vec![$zero; n.saturating_sub(2)];
                let mut swapped = vec![false; n.saturating_sub(1)];
                for i in 0..n.saturating_sub(1) {
                    if abs(d[i]) >= abs(dl[i]) {
                        if abs(d[i]) <= tiny(i) {
                            return None;
                        }
                        let fact = dl[i] / d[i];
                        dl[i] = fact;
                        d[i + 1] = d[i + 1] - fact * du[i];
                    } else {
                        let fact = d[i] / dl[i];
                        d[i] = dl[i];
                        dl[i] = fact;
                        let temp = du[i];
                        du[i] = d[i + 1];
                        d[i + 1] = temp - fact * d[i + 1];
                        if i + 2 < n {
                            du2[i] = du[i + 1];
                            du[i + 1] = -fact * du[i + 1];
                        }
                        swapped[i] = true;
                    }
                }
                if abs(d[n - 1]) <= tiny(n - 1) {
                    return None;
                }
                Some($name { dl, d, du, du2, swapped })
            }

            pub fn len(&self) -> usize {
                self.d.len()
            }

            pub fn is_empty(&self) -> bool {
                self.d.is_empty()
            }

            /// Overwrites `b` with the solution of `A x = b`.
            pub fn solve_in_place(&self, b: &mut [$t]) {
                let n = self.d.len();
                assert_eq!(b.len(), n);
                for i in 0..n.saturating_sub(1) {
                    if self.swapped[i] {
                        let temp = b[i];
                        b[i] = b[i + 1];
                        b[i + 1] = temp - self.dl[i] * b[i];
                    } else {
                        b[i + 1] = b[i + 1] - self.dl[i] * b[i];
                    }
                }
                b[n - 1] = b[n - 1] / self.d[n - 1];
                if n > 1 {
                    b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
                }
                for i in (0..n.saturating_sub(2)).rev() {
                    b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
                }
            }

            pub fn solve(&self, b: &[$t]) -> Vec<$t> {
                let mut x = b.to_vec();
                self.solve_in_place(&mut x);
                x
            }
        }
    };
}

tridiag_lu!(ComplexTridiagLu, Complex64, |v: Complex64| v.norm(), Complex64::new(0.0, 0.0));
tridiag_lu!(RealTridiagLu, f64, |v: f64| v.abs(), 0.0);

/// Complex tridiagonal solve that maps a vanishing pivot to [`MaghelmError::SingularSystem`].
pub fn solve_complex_tridiag(
    sub: &[Complex64],
    diag: &[Complex64],
    sup: &[Complex64],
    rhs: &[Complex64],
    lambda: f64,
    epsilon: f64,
) -> Result<Vec<Complex64>> {
    let lu = ComplexTridiagLu::factor(sub, diag, sup)
        .ok_or(MaghelmError::SingularSystem { lambda, epsilon })?;
    let x = lu.solve(rhs);
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(MaghelmError::SingularSystem { lambda, epsilon });
    }
    Ok(x)
}

/// Real symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len());
        SymTridiag { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(a, b)| a * b).collect();
        for i in 0..n - 1 {
            y[i] += self.off[i] * x[i + 1];
            y[i + 1] += self.off[i] * x[i];
        }
        y
    }

    pub fn quad(&self, x: &[f64]) -> f64 {
        self.mul(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `self + s·other`.
    pub fn add_scaled(&self, other: &SymTridiag, s: f64) -> SymTridiag {
        SymTridiag {
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a + s * b).collect(),
            off: self.off.iter().zip(&other.off).map(|(a, b)| a + s * b).collect(),
        }
    }

    pub fn factor(&self) -> Option<RealTridiagLu> {
        RealTridiagLu::factor(&self.off, &self.diag, &self.off)
    }
}

/// Result of [`generalized_top_eigen`].
#[derive(Debug, Clone)]
pub struct TopEigen {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Eigenvalue of `K⁻¹M` with the largest modulus, by power iteration.
///
/// `K` must be symmetric positive definite. The value returned is the Rayleigh
/// quotient `xᵀMx / xᵀKx`; iteration stops when successive quotients differ by
/// at most `tol` relative.
pub fn generalized_top_eigen(
    k: &SymTridiag,
    m: &SymTridiag,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<TopEigen> {
    if max_iter == 0 {
        return Err(MaghelmError::NoIterations);
    }
    let lu = k.factor().ok_or_else(|| {
        MaghelmError::InvalidParameter("stiffness matrix is singular".into())
    })?;
    let mut x = start.to_vec();
    let mut prev = f64::NAN;
    let mut value = 0.0;
    for it in 1..=max_iter {
        let mut y = m.mul(&x);
        lu.solve_in_place(&mut y);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Ok(TopEigen { value: 0.0, vector: x, iterations: it, converged: true });
        }
        y.iter_mut().for_each(|v| *v /= norm);
        x = y;
        value = m.quad(&x) / k.quad(&x);
        if (value - prev).abs() <= tol * value.abs().max(f64::MIN_POSITIVE) {
            return Ok(TopEigen { value, vector: x, iterations: it, converged: true });
        }
        prev = value;
    }
    Ok(TopEigen { value, vector: x, iterations: max_iter, converged: false })
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric tridiagonal matrix.
///
/// `vectors[j]` is the eigenvector of `values[j]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Implicit QL with Wilkinson shifts.
pub fn sym_tridiag_eigen(a: &SymTridiag) -> Result<SymEigen> {
    let n = a.len();
    let mut d = a.diag.clone();
    let mut e = a.off.clone();
    e.push(0.0);
    let mut z: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row
        })
        .collect();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(MaghelmError::InvalidParameter("QL iteration did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut early = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (lo, hi) = z.split_at_mut(i + 1);
                let zi = &mut lo[i];
                let zi1 = &mut hi[0];
                for (a_, b_) in zi.iter_mut().zip(zi1.iter_mut()) {
                    let f2 = *b_;
                    *b_ = s * *a_ + c * f2;
                    *a_ = c * *a_ - s * f2;
                }
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values = order.iter().map(|&i| d[i]).collect();
    let mut slots: Vec<Option<Vec<f64>>> = z.into_iter().map(Some).collect();
    let vectors = order.iter().map(|&i| slots[i].take().unwrap()).collect();
    Ok(SymEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_mul(sub: &[Complex64], diag: &[Complex64], sup: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
        let n = diag.len();
        (0..n)
            .map(|i| {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += sup[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    #[test]
    fn pivoting_handles_zero_leading_diagonal() {
        let sub = vec![Complex64::new(1.0, 0.0); 2];
        let diag = vec![Complex64::new(0.0, 0.0), Complex64::new(2.0, 0.0), Complex64::new(3.0, 1.0)];
        let sup = vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.5)];
        let b = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(2.0, 0.0)];
        let x = solve_complex_tridiag(&sub, &diag, &sup, &b, 1.0, 0.0).unwrap();
        let back = dense_mul(&sub, &diag, &sup, &x);
        for (a, c) in back.iter().zip(&b) {
            assert!((a - c).norm() < 1e-14);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let sub = vec![Complex64::new(1.0, 0.0)];
        let diag = vec![Complex64::new(1.0, 0.0); 2];
        let sup = vec![Complex64::new(1.0, 0.0)];
        let b = vec![Complex64::new(1.0, 0.0); 2];
        let err = solve_complex_tridiag(&sub, &diag, &sup, &b, 2.0, 0.0).unwrap_err();
        assert_eq!(err, MaghelmError::SingularSystem { lambda: 2.0, epsilon: 0.0 });
    }

    #[test]
    fn ql_matches_dense_oracle() {
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() * 3.0).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| 1.0 + (i as f64 * 0.3).cos()).collect();
        let a = SymTridiag::new(diag.clone(), off.clone());
        let eig = sym_tridiag_eigen(&a).unwrap();
        let mut dense = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            dense[(i, i)] = diag[i];
            if i + 1 < n {
                dense[(i, i + 1)] = off[i];
                dense[(i + 1, i)] = off[i];
            }
        }
        let mut oracle: Vec<f64> = dense.symmetric_eigen().eigenvalues.iter().copied().collect();
        oracle.sort_by(f64::total_cmp);
        for (a_, b_) in eig.values.iter().zip(&oracle) {
            assert!((a_ - b_).abs() < 1e-12, "{a_} vs {b_}");
        }
        for (j, v) in eig.vectors.iter().enumerate() {
            let av = a.mul(v);
            let res: f64 = av.iter().zip(v).map(|(x, y)| (x - eig.values[j] * y).powi(2)).sum::<f64>().sqrt();
            assert!(res < 1e-12);
            for w in eig.vectors.iter().skip(j + 1).take(3) {
                let dot: f64 = v.iter().zip(w).map(|(x, y)| x * y).sum();
                assert!(dot.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generalized_power_iteration_finds_largest_ratio() {
        let n = 30;
        let k = SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1]);
        let m = SymTridiag::new(vec![1.0; n], vec![0.0; n - 1]);
        let top = generalized_top_eigen(&k, &m, &vec![1.0; n], 1e-12, 100_000).unwrap();
        let lambda_min = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!(top.converged);
        assert!((top.value - 1.0 / lambda_min).abs() < 1e-8 * top.value);
    }

    #[test]
    fn zero_iteration_cap_is_rejected() {
        let k = SymTridiag::new(vec![2.0; 4], vec![-1.0; 3]);
        let err = generalized_top_eigen(&k, &k, &[1.0; 4], 1e-8, 0).unwrap_err();
        assert_eq!(err.to_string(), "no iterations");
    }

    proptest! {
        #[test]
        fn complex_solve_has_small_residual(
            seed in proptest::collection::vec(-1.0f64..1.0, 5 * 24),
        ) {
            let n = 24;
            let c = |i: usize| Complex64::new(seed[i], seed[i + n]);
            let diag: Vec<Complex64> = (0..n).map(|i| c(i) + Complex64::new(0.1, 0.0)).collect();
            let sub: Vec<Complex64> = (0..n - 1).map(|i| Complex64::new(seed[2 * n + i], 0.3)).collect();
            let sup: Vec<Complex64> = (0..n - 1).map(|i| Complex64::new(seed[3 * n + i], -0.2)).collect();
            let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(seed[4 * n + i], 1.0)).collect();
            if let Some(lu) = ComplexTridiagLu::factor(&sub, &diag, &sup) {
                let x = lu.solve(&b);
                let back = dense_mul(&sub, &diag, &sup, &x);
                let xn = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
                for (a, bb) in back.iter().zip(&b) {
                    prop_assert!((a - bb).norm() <= 1e-10 * (1.0 + xn));
                }
            }
        }
    }
}
