use criterion::{criterion_group, criterion_main, Criterion};
use epictrl_bench::reference_scenario;
use epictrl_core::optimizer::{projected_gradient_descent, reduced_gradient, OptimizerOptions};
use epictrl_core::{solve_adjoint, solve_forward};

fn forward(c: &mut Criterion) {
    let sc = reference_scenario(64, 1000);
    let u = sc.bounds().midpoint();
    c.bench_function("forward 1d 64x1000", |b| b.iter(|| solve_forward(&sc, &u).unwrap()));
    let sc2 = epictrl_bench::planar_scenario(24, 200);
    let u2 = sc2.bounds().midpoint();
    c.bench_function("forward 2d 24x24x200", |b| b.iter(|| solve_forward(&sc2, &u2).unwrap()));
}

fn adjoint(c: &mut Criterion) {
    let sc = reference_scenario(64, 1000);
    let u = sc.bounds().midpoint();
    let fw = solve_forward(&sc, &u).unwrap();
    c.bench_function("adjoint 1d 64x1000", |b| b.iter(|| solve_adjoint(&sc, &fw, &u).unwrap()));
    c.bench_function("gradient 1d 64x1000", |b| {
        b.iter(|| {
            let ad = solve_adjoint(&sc, &fw, &u).unwrap();
            reduced_gradient(&sc, &fw, &ad, &u).unwrap()
        })
    });
}

fn optimizer(c: &mut Criterion) {
    let sc = reference_scenario(32, 500);
    let u = sc.bounds().midpoint();
    let options = OptimizerOptions {
        initial_step: 0.2,
        ..OptimizerOptions::default()
    };
    let mut group = c.benchmark_group("optimizer");
    group.sample_size(10);
    group.bench_function("projected gradient 1d 32x500", |b| {
        b.iter(|| projected_gradient_descent(&sc, &u, &options).unwrap())
    });
    group.finish();
}

criterion_group!(benches, forward, adjoint, optimizer);
criterion_main!(benches);
