//! Shared inputs for the benchmarks.

use std::sync::Arc;

use maghelm_core::linalg::SymTridiag;
use maghelm_core::potentials::{build_example, PotentialKind, PotentialSpec};
use maghelm_core::source::{RadialProfile, SourceSpec};
use maghelm_core::{ProblemSpec, RadialMesh};

pub fn annulus() -> SourceSpec {
    SourceSpec::radial(RadialProfile::Annulus { inner: 1.0, outer: 2.0 })
}

pub fn inverse_square(nu1: f64) -> PotentialSpec {
    build_example(PotentialKind::InverseSquareV { nu1 }, 3).expect("valid example")
}

/// Free d = 3 problem at `λ = 1`, `ε = 0.1` on `[1e-3, r_max]` with a graded mesh of `nodes`.
pub fn free_problem(r_max: f64, nodes: usize) -> (ProblemSpec, Arc<RadialMesh>) {
    let problem = ProblemSpec::new(3, 1.0, 0.1).with_truncation(1e-3, r_max);
    let mesh = RadialMesh::graded(1e-3, r_max, nodes).expect("valid mesh");
    (problem, Arc::new(mesh))
}

/// Discrete radial Laplacian on `n` uniform interior nodes of `[0, 1]`.
pub fn laplacian(n: usize) -> SymTridiag {
    let h = 1.0 / (n as f64 + 1.0);
    SymTridiag::new(vec![2.0 / (h * h); n], vec![-1.0 / (h * h); n - 1])
}
