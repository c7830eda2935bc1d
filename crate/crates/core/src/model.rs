//! Shared domain types: problem parameters, graded radial meshes, per-mode
//! fields and the report record every verification returns.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MaghelmError, Result};

/// Default total node count of a graded mesh.
pub const DEFAULT_NODES: usize = 4096;

/// Selects `λ + iε` or `λ − iε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    /// `+1` for the outgoing branch, `−1` for the incoming one.
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Dimension, spectral parameter, absorption, branch and truncation geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub d: u32,
    pub lambda: f64,
    pub epsilon: f64,
    pub sign: Sign,
    pub r_min: f64,
    pub r_max: f64,
    pub mode_cutoff: u32,
}

impl ProblemSpec {
    /// Free-space defaults around the given spectral data (`r_min = 10⁻³`, `r_max = 64`).
    pub fn new(d: u32, lambda: f64, epsilon: f64) -> Self {
        ProblemSpec {
            d,
            lambda,
            epsilon,
            sign: Sign::Plus,
            r_min: 1e-3,
            r_max: 64.0,
            mode_cutoff: 4,
        }
    }

    pub fn with_sign(mut self, sign: Sign) -> Self {
        self.sign = sign;
        self
    }

    pub fn with_truncation(mut self, r_min: f64, r_max: f64) -> Self {
        self.r_min = r_min;
        self.r_max = r_max;
        self
    }

    pub fn with_cutoff(mut self, cutoff: u32) -> Self {
        self.mode_cutoff = cutoff;
        self
    }

    /// The complex spectral parameter `λ ± iε`.
    pub fn z(&self) -> Complex64 {
        Complex64::new(self.lambda, self.sign.factor() * self.epsilon)
    }

    /// Wavenumber `k` with `k² = λ ± iε`; principal root for `+`, its conjugate for `−`.
    pub fn k(&self) -> Complex64 {
        let kp = Complex64::new(self.lambda, self.epsilon).sqrt();
        match self.sign {
            Sign::Plus => kp,
            Sign::Minus => kp.conj(),
        }
    }

    /// Half-power weight exponent `(d − 1)/2` of the reduced field.
    pub fn half_weight(&self) -> f64 {
        (self.d as f64 - 1.0) / 2.0
    }
}

/// Checks dimension, truncation and the spectral pair.
pub fn validate_spec(spec: ProblemSpec) -> Result<ProblemSpec> {
    if spec.d != 2 && spec.d != 3 {
        return Err(MaghelmError::UnsupportedDimension(spec.d));
    }
    if !(spec.lambda.is_finite() && spec.epsilon.is_finite()) {
        return Err(MaghelmError::InvalidParameter("non-finite spectral data".into()));
    }
    if spec.lambda == 0.0 && spec.epsilon == 0.0 {
        return Err(MaghelmError::DegenerateSpectral);
    }
    if spec.epsilon < 0.0 {
        return Err(MaghelmError::InvalidParameter("epsilon must be non-negative".into()));
    }
    if !(spec.r_min > 0.0) || spec.r_min >= spec.r_max {
        return Err(MaghelmError::InvalidTruncation(format!(
            "need 0 < r_min < r_max, got [{}, {}]",
            spec.r_min, spec.r_max
        )));
    }
    if !(spec.r_min < 1.0 && 1.0 < spec.r_max) {
        return Err(MaghelmError::InvalidTruncation(format!(
            "need r_min < 1 < r_max, got [{}, {}]",
            spec.r_min, spec.r_max
        )));
    }
    Ok(spec)
}

/// How the nodes of a mesh are spaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grading {
    Geometric,
    Uniform,
}

/// Strictly increasing nodes on `[r_min, r_max]` with trapezoid weights.
///
/// Nodes below `junction` are geometrically graded, nodes above it are uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialMesh {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    grading: Grading,
    junction: f64,
}

impl RadialMesh {
    /// Builds a mesh from explicit nodes.
    pub fn from_nodes(nodes: Vec<f64>, grading: Grading, junction: f64) -> Result<Self> {
        if nodes.len() < 16 {
            return Err(MaghelmError::InvalidParameter(format!(
                "mesh needs at least 16 nodes, got {}",
                nodes.len()
            )));
        }
        if nodes[0] <= 0.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MaghelmError::InvalidParameter(
                "mesh nodes must be positive and strictly increasing".into(),
            ));
        }
        let weights = trapezoid_weights(&nodes);
        Ok(RadialMesh { nodes, weights, grading, junction })
    }

    /// Geometric grading from `r_min` to 1, uniform from 1 to `r_max`, about `target` nodes.
    ///
    /// The uniform part has an integer number of cells per unit length, so integer
    /// radii are nodes whenever `r_max` is an integer.
    pub fn graded(r_min: f64, r_max: f64, target: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_min < 1.0 && r_max > 1.0) {
            return Err(MaghelmError::InvalidTruncation(format!(
                "graded mesh needs r_min < 1 < r_max, got [{r_min}, {r_max}]"
            )));
        }
        let log_span = (1.0 / r_min).ln();
        let h_est = (log_span + r_max - 1.0) / target.max(16) as f64;
        let per_unit = (1.0 / h_est).round().max(1.0);
        let h = 1.0 / per_unit;
        let n_u = ((per_unit * (r_max - 1.0)).round() as usize).max(1);
        let q = 1.0 / (1.0 - h.min(0.5));
        let n_g = ((log_span / q.ln()).round() as usize).max(1);
        let mut nodes = Vec::with_capacity(n_g + n_u + 1);
        for j in 0..n_g {
            nodes.push(r_min * (log_span * j as f64 / n_g as f64).exp());
        }
        for j in 0..=n_u {
            nodes.push(1.0 + (j as f64 * (r_max - 1.0)) / n_u as f64);
        }
        RadialMesh::from_nodes(nodes, Grading::Geometric, 1.0)
    }

    /// The default mesh (about 4096 nodes) for a problem's truncation.
    pub fn default_for(problem: &ProblemSpec) -> Result<Self> {
        RadialMesh::graded(problem.r_min, problem.r_max, DEFAULT_NODES)
    }

    /// Purely geometric nodes with `n` nodes (constant ratio throughout).
    pub fn geometric(r_min: f64, r_max: f64, n: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min) || n < 2 {
            return Err(MaghelmError::InvalidTruncation(format!("[{r_min}, {r_max}]")));
        }
        let span = (r_max / r_min).ln();
        let mut nodes: Vec<f64> = (0..n)
            .map(|j| r_min * (span * j as f64 / (n - 1) as f64).exp())
            .collect();
        nodes[n - 1] = r_max;
        RadialMesh::from_nodes(nodes, Grading::Geometric, r_max)
    }

    /// Uniform nodes with `n` nodes.
    pub fn uniform(r_min: f64, r_max: f64, n: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min) || n < 2 {
            return Err(MaghelmError::InvalidTruncation(format!("[{r_min}, {r_max}]")));
        }
        let nodes = (0..n)
            .map(|j| r_min + (j as f64 * (r_max - r_min)) / (n - 1) as f64)
            .collect();
        RadialMesh::from_nodes(nodes, Grading::Uniform, r_min)
    }

    /// Inserts every cell midpoint, roughly doubling the node count.
    pub fn refined(&self) -> RadialMesh {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(*self.nodes.last().unwrap());
        RadialMesh::from_nodes(nodes, self.grading, self.junction).expect("refinement keeps order")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grading(&self) -> Grading {
        self.grading
    }

    pub fn junction(&self) -> f64 {
        self.junction
    }

    pub fn r(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn r_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn r_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Cell width `r_{i+1} − r_i`.
    pub fn spacing(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    /// Largest cell width.
    pub fn max_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index of the node equal to `r` up to a relative tolerance of `1e-10`.
    pub fn index_of(&self, r: f64) -> Option<usize> {
        let pos = self.nodes.partition_point(|&x| x < r);
        let tol = 1e-10 * r.abs().max(1e-300);
        [pos.saturating_sub(1), pos]
            .into_iter()
            .filter(|&i| i < self.nodes.len())
            .find(|&i| (self.nodes[i] - r).abs() <= tol)
    }

    /// Index of the first node `≥ r` (clamped to the last node).
    pub fn first_at_or_above(&self, r: f64) -> usize {
        let tol = 1e-12 * r.abs();
        self.nodes
            .partition_point(|&x| x < r - tol)
            .min(self.nodes.len() - 1)
    }

    /// Trapezoid integral of nodal samples.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.nodes.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Trapezoid integral of nodal samples produced by `f(i)`.
    pub fn integrate_with(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.weights.iter().enumerate().map(|(i, w)| w * f(i)).sum()
    }

    /// Running trapezoid integral from `r_min`; entry `i` covers `[r_0, r_i]`.
    pub fn cumulative(&self, values: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        out.push(0.0);
        for i in 1..values.len() {
            acc += 0.5 * (values[i - 1] + values[i]) * self.spacing(i - 1);
            out.push(acc);
        }
        out
    }

    /// Second-order three-point derivative on the non-uniform nodes.
    pub fn derivative(&self, values: &[Complex64]) -> Vec<Complex64> {
        let n = self.nodes.len();
        let mut d = vec![Complex64::new(0.0, 0.0); n];
        for i in 1..n - 1 {
            let (a, b) = (self.spacing(i - 1), self.spacing(i));
            d[i] = values[i - 1] * (-b / (a * (a + b)))
                + values[i] * ((b - a) / (a * b))
                + values[i + 1] * (a / (b * (a + b)));
        }
        let (a, b) = (self.spacing(0), self.spacing(1));
        d[0] = values[0] * (-(2.0 * a + b) / (a * (a + b)))
            + values[1] * ((a + b) / (a * b))
            + values[2] * (-a / (b * (a + b)));
        let (a, b) = (self.spacing(n - 2), self.spacing(n - 3));
        d[n - 1] = values[n - 1] * ((2.0 * a + b) / (a * (a + b)))
            - values[n - 2] * ((a + b) / (a * b))
            + values[n - 3] * (a / (b * (a + b)));
        d
    }

    /// Real-valued variant of [`RadialMesh::derivative`].
    pub fn derivative_real(&self, values: &[f64]) -> Vec<f64> {
        let c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.derivative(&c).into_iter().map(|z| z.re).collect()
    }
}

fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = nodes[i + 1] - nodes[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// One angular mode. `index` is `ℓ` in `d = 3` (with `sub = m ∈ [−ℓ, ℓ]`)
/// or the Fourier index `m` in `d = 2` (with `sub = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeIndex {
    pub d: u32,
    pub index: i32,
    pub sub: i32,
    pub nu_eff: f64,
}

impl ModeIndex {
    pub fn key(&self) -> (i32, i32) {
        (self.index, self.sub)
    }
}

/// Samples of one mode on a mesh; `reduced` marks `w = r^{(d−1)/2} u`.
#[derive(Debug, Clone)]
pub struct RadialField {
    pub mesh: Arc<RadialMesh>,
    pub values: Vec<Complex64>,
    pub mode: ModeIndex,
    pub reduced: bool,
    /// Sorted nodes where the field jumps and its sample is the mean of the one-sided limits.
    pub jumps: Vec<usize>,
}

impl RadialField {
    pub fn new(mesh: Arc<RadialMesh>, values: Vec<Complex64>, mode: ModeIndex, reduced: bool) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(MaghelmError::LengthMismatch { expected: mesh.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(MaghelmError::InvalidParameter("non-finite field sample".into()));
        }
        Ok(RadialField { mesh, values, mode, reduced, jumps: Vec::new() })
    }

    pub fn zeros(mesh: Arc<RadialMesh>, mode: ModeIndex, reduced: bool) -> Self {
        let n = mesh.len();
        RadialField { mesh, values: vec![Complex64::new(0.0, 0.0); n], mode, reduced, jumps: Vec::new() }
    }

    fn rescaled(&self, exponent: f64) -> Vec<Complex64> {
        self.mesh
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&r, &v)| v * r.powf(exponent))
            .collect()
    }

    /// The reduced form `w = r^{(d−1)/2} u` (identity if already reduced).
    pub fn to_reduced(&self) -> RadialField {
        if self.reduced {
            return self.clone();
        }
        let p = (self.mode.d as f64 - 1.0) / 2.0;
        RadialField { values: self.rescaled(p), reduced: true, ..self.clone() }
    }

    /// The plain form `u = r^{−(d−1)/2} w` (identity if already plain).
    pub fn to_plain(&self) -> RadialField {
        if !self.reduced {
            return self.clone();
        }
        let p = (self.mode.d as f64 - 1.0) / 2.0;
        RadialField { values: self.rescaled(-p), reduced: false, ..self.clone() }
    }

    pub fn scaled(&self, c: Complex64) -> RadialField {
        RadialField { values: self.values.iter().map(|v| v * c).collect(), ..self.clone() }
    }
}

/// Which radial solver produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Fd,
    Green,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::Fd => "fd",
            SolverKind::Green => "green",
        }
    }
}

/// Left side, right side and ratio of one verified inequality or identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub kind: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub params: ProblemSpec,
    pub mesh_nodes: usize,
    pub solver: SolverKind,
    pub notes: String,
}

impl EstimateReport {
    /// Builds a report; `rhs` must be positive.
    pub fn new(kind: &str, lhs: f64, rhs: f64, params: ProblemSpec, mesh_nodes: usize, solver: SolverKind) -> Result<Self> {
        if !(rhs > 0.0) || !rhs.is_finite() {
            return Err(MaghelmError::InvalidParameter(format!("{kind}: right side must be positive, got {rhs}")));
        }
        if !(lhs >= 0.0) || !lhs.is_finite() {
            return Err(MaghelmError::InvalidParameter(format!("{kind}: left side must be non-negative, got {lhs}")));
        }
        Ok(EstimateReport {
            kind: kind.to_string(),
            lhs,
            rhs,
            ratio: lhs / rhs,
            params,
            mesh_nodes,
            solver,
            notes: String::new(),
        })
    }

    pub fn with_notes(mut self, notes: impl Into<String>) -> Self {
        self.notes = notes.into();
        self
    }
}

/// Surface measure `|S^{d−1}|`.
pub fn sphere_area(d: u32) -> f64 {
    match d {
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => {
            let h = d as f64 / 2.0;
            2.0 * std::f64::consts::PI.powf(h) / crate::bessel::gamma(h)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_reference_problem() {
        let p = ProblemSpec::new(3, 1.0, 0.01);
        assert_eq!(validate_spec(p).unwrap(), p);
    }

    #[test]
    fn rejects_dimension_four() {
        let p = ProblemSpec::new(4, 1.0, 0.01);
        assert_eq!(validate_spec(p), Err(MaghelmError::UnsupportedDimension(4)));
        assert_eq!(MaghelmError::UnsupportedDimension(4).to_string(), "unsupported dimension 4");
    }

    #[test]
    fn rejects_zero_spectral_pair() {
        let p = ProblemSpec::new(3, 0.0, 0.0);
        let err = validate_spec(p).unwrap_err();
        assert_eq!(err.to_string(), "degenerate spectral parameter");
    }

    #[test]
    fn rejects_inverted_truncation() {
        let p = ProblemSpec::new(3, 1.0, 0.1).with_truncation(2.0, 1.5);
        assert!(matches!(validate_spec(p), Err(MaghelmError::InvalidTruncation(_))));
    }

    #[test]
    fn branch_has_positive_imaginary_part_for_plus() {
        let p = ProblemSpec::new(3, 1.0, 0.3);
        assert!(p.k().im > 0.0);
        let k = p.k();
        assert!((k * k - p.z()).norm() < 1e-14);
        let m = p.with_sign(Sign::Minus);
        assert!(m.k().im < 0.0);
        assert!((m.k() * m.k() - m.z()).norm() < 1e-14);
    }

    #[test]
    fn default_mesh_has_about_4096_nodes_and_exact_quadrature() {
        let mesh = RadialMesh::graded(1e-3, 64.0, DEFAULT_NODES).unwrap();
        let n = mesh.len() as f64;
        assert!((n - 4096.0).abs() / 4096.0 < 0.05, "{n}");
        for s in 0..3 {
            let exact = (64f64.powi(s + 1) - 1e-3f64.powi(s + 1)) / (s + 1) as f64;
            let approx = mesh.integrate_with(|i| mesh.r(i).powi(s));
            assert!(((approx - exact) / exact).abs() <= 1e-3, "s = {s}");
        }
    }

    #[test]
    fn graded_mesh_has_constant_ratio_near_origin() {
        let mesh = RadialMesh::graded(1e-3, 16.0, 2048).unwrap();
        let q0 = mesh.spacing(1) / mesh.spacing(0);
        let q1 = mesh.spacing(10) / mesh.spacing(9);
        assert!((q0 - q1).abs() < 1e-9);
        assert!(mesh.index_of(2.0).is_some());
        assert!(mesh.index_of(1.0).is_some());
    }

    #[test]
    fn derivative_is_second_order() {
        let mut errs = Vec::new();
        for n in [512usize, 1024] {
            let mesh = RadialMesh::graded(1e-2, 8.0, n).unwrap();
            let v: Vec<Complex64> = mesh.nodes().iter().map(|&r| Complex64::new(r.sin(), r * r)).collect();
            let d = mesh.derivative(&v);
            let e = mesh
                .nodes()
                .iter()
                .zip(&d)
                .map(|(&r, dv)| (dv - Complex64::new(r.cos(), 2.0 * r)).norm())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 3.0, "{errs:?}");
    }

    #[test]
    fn reduction_round_trip() {
        let mesh = Arc::new(RadialMesh::graded(1e-3, 8.0, 256).unwrap());
        let mode = ModeIndex { d: 3, index: 0, sub: 0, nu_eff: 0.5 };
        let vals = mesh.nodes().iter().map(|&r| Complex64::new(r.cos(), 1.0 / r)).collect();
        let f = RadialField::new(mesh, vals, mode, false).unwrap();
        let back = f.to_reduced().to_plain();
        for (a, b) in f.values.iter().zip(&back.values) {
            assert!((a - b).norm() <= 1e-12 * a.norm());
        }
    }

    #[test]
    fn report_ratio_is_exact_quotient() {
        let p = ProblemSpec::new(3, 1.0, 0.1);
        let r = EstimateReport::new("bp", 3.0, 7.0, p, 100, SolverKind::Fd).unwrap();
        assert_eq!(r.ratio, 3.0 / 7.0);
        assert!(EstimateReport::new("bp", 1.0, 0.0, p, 100, SolverKind::Fd).is_err());
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-15);
        assert!((sphere_area(5) - 8.0 * std::f64::consts::PI.powi(2) / 3.0).abs() < 1e-12);
    }
}
