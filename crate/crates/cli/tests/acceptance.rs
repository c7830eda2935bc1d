//! Acceptance suite: one PASS/FAIL line per criterion, every tolerance pinned below.
//!
//! Criteria listed in `KNOWN_UNATTAINABLE` still print FAIL when they fail; they do not fail
//! the process unless `MAGHELM_ACCEPTANCE_STRICT=1`. Any other failure exits non-zero.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::Instant;

use maghelm_core::estimates::{
    estimate_sweep, hardy_constant, hardy_mesh, operator_norm_sweep, verify_estimate, weighted_tail_profile,
    EstimateExtras, EstimateKind, PowerOptions, SobolevWeight, SweepGrid,
};
use maghelm_core::evolution::{smoothing_curve, SmoothingOptions};
use maghelm_core::farfield::{
    cross_section, dyadic_window, spectral_reconstruction, support_radius, SpectralRule,
};
use maghelm_core::fem::{magnetic_dirichlet, weighted_mass};
use maghelm_core::identities::{alpha1_residual, morawetz_residual, MultiplierSpec};
use maghelm_core::linalg::SymTridiag;
use maghelm_core::norms::{f_fields, log_slope, slab_scaling};
use maghelm_core::potentials::{build_example, PotentialKind, PotentialSpec};
use maghelm_core::radial_solver::{resolve_green_on, resolve_on};
use maghelm_core::source::{HarmonicTerm, RadialProfile, SourceSpec};
use maghelm_core::{MaghelmError, ProblemSpec, RadialMesh};
use nalgebra::DMatrix;
use num_complex::Complex64;

const KNOWN_UNATTAINABLE: &[u32] = &[5, 10];

// Criteria 1 and 2.
const IDENTITY_NODES: [usize; 3] = [2048, 4096, 8192];
const IDENTITY_AT: usize = 4096;
const IDENTITY_TOL: f64 = 1e-5;
const IDENTITY_REDUCTION: f64 = 3.0;
const IDENTITY_SECONDS: f64 = 5.0;
// Criterion 3.
const HARDY_FREE_RANGE: (f64, f64) = (3.96, 4.00);
const HARDY_ORACLE_TOL: f64 = 0.05;
// Criterion 4.
const DUAL_TOL: f64 = 1e-4;
const MIN_ORDER: f64 = 2.0;
// Criterion 5.
const BP_LAMBDAS: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
const BP_EPSILONS: [f64; 3] = [1e-1, 1e-2, 1e-3];
const BP_DISPERSION: f64 = 4.0;
const BP_EXPONENT: (f64, f64) = (-0.2, 0.2);
const BP_SECONDS: f64 = 120.0;
// Criterion 6.
const SRC_STABILITY: f64 = 0.05;
const CONTROL_GROWTH: f64 = 1.8;
// Criterion 7.
const MASS_TOL: f64 = 1e-3;
// Criterion 8.
const SPECTRAL_TOL: f64 = 0.01;
// Criterion 9.
const SATURATION: f64 = 0.1;
// Criterion 10.
const SLAB_EXPONENT_TOL: f64 = 0.10;
const SLAB_NORM_SPREAD: f64 = 0.10;

struct Verdict {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
    supplementary: Vec<String>,
}

fn verdict(id: u32, title: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { id, title, pass, detail, supplementary: Vec::new() }
}

fn annulus() -> SourceSpec {
    SourceSpec::radial(RadialProfile::Annulus { inner: 1.0, outer: 2.0 })
}

fn ab(alpha: f64) -> PotentialSpec {
    build_example(PotentialKind::AharonovBohm { alpha }, 2).unwrap()
}

fn inverse_square(nu1: f64) -> PotentialSpec {
    build_example(PotentialKind::InverseSquareV { nu1 }, 3).unwrap()
}

fn rel_l2(mesh: &RadialMesh, a: &[Complex64], b: &[Complex64], d: u32) -> f64 {
    let rho = d as f64 - 1.0;
    let num = mesh.integrate_with(|i| (a[i] - b[i]).norm_sqr() * mesh.r(i).powf(rho));
    let den = mesh.integrate_with(|i| b[i].norm_sqr() * mesh.r(i).powf(rho));
    (num / den).sqrt()
}

/// Outgoing solution for the unit-mass annulus source on `[1, 2]` in d = 3, by variation of constants.
fn free_annulus_oracle(k: Complex64, r: f64) -> Complex64 {
    let i = Complex64::i();
    let p_sin = |s: f64| (k * s).sin() / (k * k) - (k * s).cos() * s / k;
    let p_exp = |s: f64| (i * k * s).exp() * (s / (i * k) + 1.0 / (k * k));
    let mut acc = Complex64::new(0.0, 0.0);
    if r > 1.0 {
        acc += (i * k * r).exp() * (p_sin(r.min(2.0)) - p_sin(1.0));
    }
    if r < 2.0 {
        acc += (k * r).sin() * (p_exp(2.0) - p_exp(r.max(1.0)));
    }
    -acc / k * (4.0 * PI).sqrt() / r
}

fn identity_closure(id: u32, title: &'static str, problem: ProblemSpec, cubic: bool) -> Verdict {
    let mut rel = Vec::new();
    let mut seconds: f64 = 0.0;
    for n in IDENTITY_NODES {
        let start = Instant::now();
        let mesh = Arc::new(RadialMesh::graded(problem.r_min, problem.r_max, n).unwrap());
        let sols = resolve_on(&PotentialSpec::free(3), &annulus(), &problem, &mesh).unwrap();
        let res = if cubic {
            alpha1_residual(&sols).unwrap()
        } else {
            morawetz_residual(&sols, &MultiplierSpec::Quadratic).unwrap()
        };
        seconds = seconds.max(start.elapsed().as_secs_f64());
        rel.push(res.relative());
    }
    let at = rel[IDENTITY_NODES.iter().position(|&n| n == IDENTITY_AT).unwrap()];
    let reductions: Vec<f64> = rel.windows(2).map(|w| w[0] / w[1]).collect();
    let worst = reductions.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = at <= IDENTITY_TOL && worst >= IDENTITY_REDUCTION && seconds <= IDENTITY_SECONDS;
    verdict(
        id,
        title,
        pass,
        format!(
            "residual {at:.3e} at {IDENTITY_AT} nodes (<= {IDENTITY_TOL:e}); reductions {reductions:.2?} (>= {IDENTITY_REDUCTION}); \
             slowest case {seconds:.3} s (<= {IDENTITY_SECONDS} s)"
        ),
    )
}

fn criterion_1() -> Verdict {
    identity_closure(1, "key identity closure", ProblemSpec::new(3, 1.0, 0.1), false)
}

fn criterion_2() -> Verdict {
    let a = identity_closure(2, "cubic identity closure", ProblemSpec::new(3, 1.0, 0.1), true);
    let b = identity_closure(2, "cubic identity closure", ProblemSpec::new(3, 4.0, 0.25), true);
    verdict(
        2,
        "cubic identity closure",
        a.pass && b.pass,
        format!("lambda 1, eps 0.1: {}; lambda 4, eps 0.25: {}", a.detail, b.detail),
    )
}

fn dense(t: &SymTridiag) -> DMatrix<f64> {
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
}

/// Mode-wise brute force: largest eigenvalue of `K⁻¹M` by dense Cholesky reduction.
fn dense_hardy_oracle(mesh: &RadialMesh, nu_sq: f64) -> f64 {
    let k = dense(&magnetic_dirichlet(mesh, nu_sq));
    let m = dense(&weighted_mass(mesh, &|r| 1.0 / (r * r)));
    let l = k.cholesky().unwrap().l();
    let li = l.clone().try_inverse().unwrap();
    (&li * m * li.transpose()).symmetric_eigen().eigenvalues.max()
}

fn criterion_3() -> Verdict {
    let wide = hardy_mesh().unwrap();
    let free = hardy_constant(&PotentialSpec::free(3), 3, &wide, 2).unwrap();
    let oracle_mesh = RadialMesh::geometric(1e-12, 1e12, 401).unwrap();
    let ab_c = hardy_constant(&ab(0.5), 2, &oracle_mesh, 3).unwrap();
    let oracle = (-3..=3).map(|m| dense_hardy_oracle(&oracle_mesh, (m as f64 + 0.5).powi(2))).fold(0.0, f64::max);
    let ab_gap = (ab_c - oracle).abs() / oracle;
    let integer = hardy_constant(&ab(1.0), 2, &wide, 3);
    let unbounded = matches!(integer, Err(MaghelmError::NoHardyInequality(_)));
    let pass = (HARDY_FREE_RANGE.0..=HARDY_FREE_RANGE.1).contains(&free)
        && ab_c.is_finite()
        && ab_gap <= HARDY_ORACLE_TOL
        && unbounded;
    verdict(
        3,
        "Hardy constant",
        pass,
        format!(
            "free d=3 {free:.5} in {HARDY_FREE_RANGE:?}; A-B 0.5 {ab_c:.5} vs dense oracle {oracle:.5} (gap {ab_gap:.2e} <= {HARDY_ORACLE_TOL}); \
             A-B 1.0 unbounded: {unbounded}"
        ),
    )
}

fn criterion_4() -> Verdict {
    let cases = [("free", PotentialSpec::free(3), 3), ("inverse_square 0.2", inverse_square(0.2), 3), ("A-B 0.5", ab(0.5), 2)];
    let mut gaps = Vec::new();
    for (name, spec, d) in &cases {
        let problem = ProblemSpec::new(*d, 1.0, 0.0).with_truncation(1e-3, 16.0);
        let mesh = Arc::new(RadialMesh::default_for(&problem).unwrap());
        let fd = resolve_on(spec, &annulus(), &problem, &mesh).unwrap();
        let gr = resolve_green_on(spec, &annulus(), &problem, &mesh).unwrap();
        gaps.push((*name, rel_l2(&mesh, &fd[0].u.values, &gr[0].u.values, *d)));
    }
    let problem = ProblemSpec::new(3, 1.0, 0.1).with_truncation(1e-3, 16.0);
    let k = problem.k();
    let (mut hs, mut errs) = (Vec::new(), Vec::new());
    for n in [1024, 2048, 4096] {
        let mesh = Arc::new(RadialMesh::graded(1e-3, 16.0, n).unwrap());
        let sols = resolve_on(&PotentialSpec::free(3), &annulus(), &problem, &mesh).unwrap();
        let exact: Vec<Complex64> = mesh.nodes().iter().map(|&r| free_annulus_oracle(k, r)).collect();
        hs.push(mesh.max_spacing());
        errs.push(rel_l2(&mesh, &sols[0].u.values, &exact, 3));
    }
    let order = log_slope(&hs, &errs);
    let errs: Vec<String> = errs.iter().map(|e| format!("{e:.2e}")).collect();
    let pass = gaps.iter().all(|g| g.1 <= DUAL_TOL) && order >= MIN_ORDER;
    let shown: Vec<String> = gaps.iter().map(|(n, g)| format!("{n} {g:.2e}")).collect();
    verdict(
        4,
        "dual-solver oracle",
        pass,
        format!(
            "fd vs Green relative L2: {} (<= {DUAL_TOL:e}); fd vs closed form errors {}, observed order {order:.2} (>= {MIN_ORDER})",
            shown.join(", "),
            errs.join(", ")
        ),
    )
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let grid = SweepGrid { lambdas: BP_LAMBDAS.to_vec(), epsilons: BP_EPSILONS.to_vec() };
    let base = ProblemSpec::new(3, 1.0, 0.1);
    let specs = [("free", PotentialSpec::free(3)), ("inverse_square 0.2", inverse_square(0.2))];
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, spec) in &specs {
        let res = estimate_sweep(EstimateKind::Bp, spec, &annulus(), &base, &grid, &EstimateExtras::default()).unwrap();
        pass &= res.dispersion <= BP_DISPERSION
            && (BP_EXPONENT.0..=BP_EXPONENT.1).contains(&res.fit_exponent);
        parts.push(format!("{name}: dispersion {:.3e}, fit exponent {:.3}", res.dispersion, res.fit_exponent));
    }
    let seconds = start.elapsed().as_secs_f64();
    pass &= seconds <= BP_SECONDS;
    let mut v = verdict(
        5,
        "uniformity of BP ratio",
        pass,
        format!(
            "{} (need dispersion <= {BP_DISPERSION}, exponent in {BP_EXPONENT:?}); sweep {seconds:.1} s (<= {BP_SECONDS} s)",
            parts.join("; ")
        ),
    );
    let small = ProblemSpec { mode_cutoff: 0, ..base };
    let norms = operator_norm_sweep(&PotentialSpec::free(3), &small, &grid, PowerOptions::default()).unwrap();
    v.supplementary.push(format!(
        "sup over f (power iteration, mode 0, free): dispersion {:.3}, fit exponent {:.3}",
        norms.dispersion, norms.fit_exponent
    ));
    v
}

fn criterion_6() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, spec) in [("free d=3", PotentialSpec::free(3)), ("A-B 0.5 d=2", ab(0.5))] {
        let mut shifted = Vec::new();
        let mut unshifted = Vec::new();
        for r_max in [64.0, 128.0] {
            let problem = ProblemSpec::new(spec.d, 1.0, 0.01).with_truncation(1e-3, r_max);
            let extras = EstimateExtras { lambda0: 0.5, ..Default::default() };
            let rep = verify_estimate(EstimateKind::Src, &spec, &annulus(), &problem, &extras).unwrap();
            shifted.push(rep.lhs);
            let mesh = Arc::new(RadialMesh::default_for(&problem).unwrap());
            let sols = resolve_on(&spec, &annulus(), &problem, &mesh).unwrap();
            let sup = weighted_tail_profile(&sols, 1.0, false).unwrap().iter().map(|p| p.1).fold(0.0, f64::max);
            unshifted.push(sup);
        }
        let change = (shifted[1] - shifted[0]).abs() / shifted[0];
        let growth = unshifted[1] / unshifted[0];
        pass &= shifted.iter().all(|v| v.is_finite()) && change <= SRC_STABILITY && growth >= CONTROL_GROWTH;
        parts.push(format!(
            "{name}: shifted sup {:.4} -> {:.4} (change {change:.2e} <= {SRC_STABILITY}), unshifted sup x{growth:.2} (>= {CONTROL_GROWTH})",
            shifted[0], shifted[1]
        ));
    }
    verdict(6, "Sommerfeld sharpness", pass, format!("r_max 64 -> 128; {}", parts.join("; ")))
}

fn criterion_7() -> Verdict {
    let one = (ProblemSpec::new(3, 1.0, 0.0).with_truncation(1e-3, 256.0), annulus());
    let two = (
        ProblemSpec::new(3, 2.0, 0.0).with_cutoff(2).with_truncation(1e-3, 256.0),
        SourceSpec::Harmonic {
            terms: vec![
                HarmonicTerm { index: 0, sub: 0, coefficient: 1.0, profile: RadialProfile::Annulus { inner: 1.0, outer: 2.0 } },
                HarmonicTerm { index: 1, sub: 0, coefficient: 0.8, profile: RadialProfile::Bump { inner: 0.5, outer: 3.0 } },
            ],
        },
    );
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, (problem, f)) in [("one-mode", one), ("two-mode", two)] {
        let mesh = Arc::new(RadialMesh::default_for(&problem).unwrap());
        let sols = resolve_on(&PotentialSpec::free(3), &f, &problem, &mesh).unwrap();
        let fs = f_fields(&sols);
        let window = dyadic_window(&mesh, support_radius(&fs), 8);
        let res = cross_section(&sols, &fs, &window).unwrap();
        let gap = (res.sphere_mass - res.mass).abs() / res.mass;
        pass &= gap <= MASS_TOL;
        parts.push(format!("{name}: sphere {:.6e} vs flux {:.6e} (gap {gap:.2e})", res.sphere_mass, res.mass));
    }
    verdict(7, "cross-section mass identity", pass, format!("{} (<= {MASS_TOL:e})", parts.join("; ")))
}

fn criterion_8() -> Verdict {
    let f = SourceSpec::radial(RadialProfile::Bump { inner: 1.0, outer: 2.0 });
    let base = ProblemSpec::new(3, 1.0, 0.0);
    let grid: Vec<f64> = (0..64).map(|j| 1e-2 * (4e4f64).powf(j as f64 / 63.0)).collect();
    let full = spectral_reconstruction(&PotentialSpec::free(3), &f, &base, &grid, SpectralRule::SimpsonLog).unwrap();
    let high: Vec<f64> = grid.iter().copied().filter(|&l| l >= 10.0).collect();
    let cut = spectral_reconstruction(&PotentialSpec::free(3), &f, &base, &high, SpectralRule::SimpsonLog).unwrap();
    let pass = (full.ratio() - 1.0).abs() <= SPECTRAL_TOL && full.warning.is_none() && cut.warning.is_some();
    verdict(
        8,
        "spectral reconstruction",
        pass,
        format!(
            "64-point grid ratio {:.5} (within {SPECTRAL_TOL}), no warning: {}; truncated grid ratio {:.4}, coverage {:.4}, warning: {}",
            full.ratio(),
            full.warning.is_none(),
            cut.ratio(),
            cut.coverage,
            cut.warning.is_some()
        ),
    )
}

fn criterion_9() -> Verdict {
    let f = SourceSpec::radial(RadialProfile::Gaussian { center: 3.0, width: 0.7 });
    let horizons = [2.0, 4.0, 8.0, 16.0];
    let curve = smoothing_curve(
        &PotentialSpec::free(3),
        &SobolevWeight::InversePower { beta: 1.0 },
        &f,
        &ProblemSpec::new(3, 1.0, 0.0),
        &horizons,
        false,
        &SmoothingOptions::default(),
    )
    .unwrap();
    let inc = curve.increments();
    let last = *inc.last().unwrap();
    let t_max = horizons[horizons.len() - 1];
    let pass = last <= SATURATION && t_max <= curve.crossing_time;
    verdict(
        9,
        "smoothing saturation",
        pass,
        format!(
            "omega = 1/|x|^2, I(2T)/I(T) - 1 = {inc:.4?}, last {last:.4} (<= {SATURATION}); T_max {t_max} within crossing time {:.2}",
            curve.crossing_time
        ),
    )
}

fn criterion_10() -> Verdict {
    let (d, k, p, q) = (5usize, 3usize, 1.01, 2.25);
    let radii = [16.0, 32.0, 64.0, 128.0];
    let s = slab_scaling(d, k, p, q, &radii, 12).unwrap();
    let predicted = 1.0 - 2.0 / q - d as f64 * (1.0 - 1.0 / p);
    let exp_gap = (s.omega1_exponent - predicted).abs() / predicted.abs();
    let hi = s.omega_norms.iter().copied().fold(0.0, f64::max);
    let lo = s.omega_norms.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = hi / lo - 1.0;
    let pass = exp_gap <= SLAB_EXPONENT_TOL && spread <= SLAB_NORM_SPREAD;
    let mut v = verdict(
        10,
        "slab counterexample scaling",
        pass,
        format!(
            "d={d}, k={k}, p={p}, q={q}: measured exponent {:.4} vs 1-2/q-d(1-1/p) = {predicted:.4} (gap {exp_gap:.2} <= {SLAB_EXPONENT_TOL}); \
             omega norm spread {spread:.3} (<= {SLAB_NORM_SPREAD})",
            s.omega1_exponent
        ),
    );
    let counted = 1.0 - 2.0 / q - d as f64 / 2.0 * (1.0 - 1.0 / p);
    v.supplementary.push(format!(
        "volume counting with the amplitude under a square root predicts {counted:.4} (gap {:.3})",
        (s.omega1_exponent - counted).abs() / counted.abs()
    ));
    v
}

fn run_binary(config: &Path, out: &Path, threads: &str) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_maghelm"))
        .args(["estimates", "--threads", threads, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("MAGHELM_THREADS")
        .stdout(Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    std::fs::read(out.join("summary.json")).unwrap()
}

fn criterion_11() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.json");
    std::fs::write(
        &config,
        r#"{
          "problem": {"d": 3, "lambda": 1.0, "epsilon": 0.1, "r_max": 32.0},
          "f": {"kind": "radial", "profile": {"shape": "annulus", "inner": 1.0, "outer": 2.0}},
          "seed": 11,
          "estimates": {"kinds": ["bp", "thm1_alpha0", "morrey"], "grid": {"lambdas": [0.5, 2.0, 8.0], "epsilons": [0.1, 0.01]},
                        "random_sources": 3}
        }"#,
    )
    .unwrap();
    let a = run_binary(&config, &tmp.path().join("a"), "4");
    let b = run_binary(&config, &tmp.path().join("b"), "4");
    let c = run_binary(&config, &tmp.path().join("c"), "1");
    let pass = a == b && a == c;
    verdict(
        11,
        "determinism",
        pass,
        format!(
            "summary.json ({} bytes) identical on repeat: {}; identical at 1 vs 4 threads: {}",
            a.len(),
            a == b,
            a == c
        ),
    )
}

fn main() {
    let strict = std::env::var("MAGHELM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [fn() -> Verdict; 11] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
        criterion_11,
    ];
    let mut unexpected = Vec::new();
    let mut passed = 0;
    for c in criteria {
        let start = Instant::now();
        let v = c();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} [{}]: {status} ({:.1} s) {}", v.id, v.title, start.elapsed().as_secs_f64(), v.detail);
        for s in &v.supplementary {
            println!("    supplementary: {s}");
        }
        if v.pass {
            passed += 1;
            if KNOWN_UNATTAINABLE.contains(&v.id) {
                println!("    note: listed as unattainable but passed; update the list");
            }
        } else if strict || !KNOWN_UNATTAINABLE.contains(&v.id) {
            unexpected.push(v.id);
        }
    }
    println!("acceptance: {passed}/11 PASS; known unattainable: {KNOWN_UNATTAINABLE:?}");
    if !unexpected.is_empty() {
        println!("acceptance: unexpected failures {unexpected:?}");
        std::process::exit(1);
    }
}
