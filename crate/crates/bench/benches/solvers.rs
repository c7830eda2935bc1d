use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use maghelm_bench::{annulus, free_problem, inverse_square, laplacian};
use maghelm_core::estimates::{estimate_sweep, hardy_constant, EstimateExtras, EstimateKind, SweepGrid};
use maghelm_core::linalg::sym_tridiag_eigen;
use maghelm_core::potentials::PotentialSpec;
use maghelm_core::radial_solver::{resolve_green_on, resolve_on};
use maghelm_core::{ProblemSpec, RadialMesh};

fn radial_solves(c: &mut Criterion) {
    let mut group = c.benchmark_group("radial_solve");
    let free = PotentialSpec::free(3);
    for nodes in [1024, 4096, 16384] {
        let (problem, mesh) = free_problem(64.0, nodes);
        group.bench_with_input(BenchmarkId::new("fd", nodes), &nodes, |b, _| {
            b.iter(|| resolve_on(&free, &annulus(), &problem, &mesh).unwrap())
        });
    }
    let (problem, mesh) = free_problem(16.0, 4096);
    group.bench_function("green/4096", |b| b.iter(|| resolve_green_on(&free, &annulus(), &problem, &mesh).unwrap()));
    group.finish();
}

fn eigen(c: &mut Criterion) {
    let a = laplacian(1024);
    c.bench_function("sym_tridiag_eigen/1024", |b| b.iter(|| sym_tridiag_eigen(black_box(&a)).unwrap()));
}

fn hardy(c: &mut Criterion) {
    let mesh = RadialMesh::geometric(1e-12, 1e12, 1001).unwrap();
    let free = PotentialSpec::free(3);
    c.bench_function("hardy_constant/1001", |b| b.iter(|| hardy_constant(&free, 3, &mesh, 2).unwrap()));
}

fn sweep(c: &mut Criterion) {
    let grid = SweepGrid { lambdas: vec![0.1, 1.0, 10.0, 100.0], epsilons: vec![1e-1, 1e-2, 1e-3] };
    let base = ProblemSpec::new(3, 1.0, 0.1);
    let spec = inverse_square(0.2);
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    group.bench_function("bp_4x3", |b| {
        b.iter(|| estimate_sweep(EstimateKind::Bp, &spec, &annulus(), &base, &grid, &EstimateExtras::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, radial_solves, eigen, hardy, sweep);
criterion_main!(benches);
