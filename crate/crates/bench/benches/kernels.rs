use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use penfem::assembly::{apply_convection, assemble_convection, assemble_mass, assemble_stiffness};
use penfem::solver::{Convection, Parameters, PenalizedSolver, PicardConfig, SystemForm};
use penfem::ElementPair;
use penfem_bench::fixture;

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    for pair in [ElementPair::P2P1, ElementPair::P3P2, ElementPair::CrP0] {
        let (disc, w) = fixture(5, pair);
        group.bench_with_input(BenchmarkId::new("mass", pair), &disc, |b, d| b.iter(|| assemble_mass(&d.velocity)));
        group.bench_with_input(BenchmarkId::new("stiffness", pair), &disc, |b, d| {
            b.iter(|| assemble_stiffness(&d.velocity))
        });
        group.bench_with_input(BenchmarkId::new("convection", pair), &disc, |b, d| {
            b.iter(|| assemble_convection(&d.velocity, &w))
        });
        group.bench_with_input(BenchmarkId::new("convection_action", pair), &disc, |b, d| {
            b.iter(|| apply_convection(&d.velocity, &w, &w))
        });
    }
    group.finish();
}

fn step_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("picard_step");
    group.sample_size(10);
    for (pair, form) in [
        (ElementPair::P2P1, SystemForm::Coupled),
        (ElementPair::CrP0, SystemForm::Coupled),
        (ElementPair::CrP0, SystemForm::Eliminated),
    ] {
        let (disc, w) = fixture(4, pair);
        let params = Parameters::new(1.0, 1e-6, 1e-3).expect("valid parameters");
        let mut solver =
            PenalizedSolver::new(disc.clone(), params, Convection::Skew, form, PicardConfig::default()).expect("solver");
        let load = vec![1.0; disc.velocity_dim()];
        let id = BenchmarkId::new(format!("{form:?}").to_lowercase(), pair);
        group.bench_function(id, |b| b.iter(|| solver.picard_step(&w, &w, &load).expect("solve")));
    }
    group.finish();
}

criterion_group!(benches, assembly, step_solve);
criterion_main!(benches);
