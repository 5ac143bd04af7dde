use std::hint::black_box;

use arakelov_toric::analysis::{analyze, verify_induction_chain};
use arakelov_toric::ding::{maximize, DingConfig, DingProblem};
use arakelov_toric::legendre::{integrate_exp_neg_exact, MaxAffinePotential};
use arakelov_toric::mabuchi::{donaldson_mabuchi, GuilleminPotential, Quadrature};
use arakelov_toric::{builtin, Builtin};
use criterion::{criterion_group, criterion_main, Criterion};

fn exact(c: &mut Criterion) {
    let hex = builtin(&Builtin::Hexagon).unwrap();
    let cube = builtin(&Builtin::Cube(3)).unwrap();
    c.bench_function("analyze/hexagon", |b| b.iter(|| analyze(black_box(&hex)).unwrap()));
    c.bench_function("analyze/cube3", |b| b.iter(|| analyze(black_box(&cube)).unwrap()));
    c.bench_function("induction_chain/500", |b| b.iter(|| verify_induction_chain(black_box(500)).unwrap()));
}

fn integration(c: &mut Criterion) {
    let p2 = builtin(&Builtin::Pn(2)).unwrap();
    let support = MaxAffinePotential::support(&p2);
    c.bench_function("exp_neg_support/P2", |b| b.iter(|| integrate_exp_neg_exact(black_box(&support)).unwrap()));
    let problem = DingProblem::new(&p2, 14).unwrap();
    let c0 = problem.initial_point(&p2);
    c.bench_function("ding_objective/P2/k14", |b| b.iter(|| problem.objective(black_box(&c0)).unwrap()));
    c.bench_function("ding_subgradient/P2/k14", |b| b.iter(|| problem.subgradient(black_box(&c0)).unwrap()));
    let g = GuilleminPotential::new(&p2);
    let q = Quadrature::Grid { subdivision: 8 };
    c.bench_function("mabuchi_guillemin/P2/grid8", |b| b.iter(|| donaldson_mabuchi(black_box(&g), &p2, &q).unwrap()));
}

fn solve(c: &mut Criterion) {
    let p1 = builtin(&Builtin::Pn(1)).unwrap();
    let p2 = builtin(&Builtin::Pn(2)).unwrap();
    let mut group = c.benchmark_group("ding_maximize");
    group.sample_size(10);
    group.bench_function("P1/k100", |b| b.iter(|| maximize(&p1, &DingConfig { subdivision: 100, ..Default::default() }).unwrap()));
    group.bench_function("P2/k7", |b| b.iter(|| maximize(&p2, &DingConfig { subdivision: 7, ..Default::default() }).unwrap()));
    group.finish();
}

criterion_group!(benches, exact, integration, solve);
criterion_main!(benches);
