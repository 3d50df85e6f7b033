//! Throughput of the main pipeline stages on the reference instance.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use drawdown_bench::reference_params;
use drawdown_core::boundary_asymptotics::solve_zstar;
use drawdown_core::closed_forms::variational_c;
use drawdown_core::curve_solver::{solve_all, SolverOptions, Stepper};
use drawdown_core::model_core::{characteristic_roots, optimal_refraction_threshold};
use drawdown_core::simulator::{simulate, SimOptions, StrategySpec};
use drawdown_core::value_surface::ValueSurface;

fn one_dimensional(c: &mut Criterion) {
    let p = reference_params();
    c.bench_function("characteristic_roots", |b| {
        b.iter(|| characteristic_roots(black_box(1.7), &p))
    });
    c.bench_function("optimal_refraction_threshold", |b| {
        b.iter(|| optimal_refraction_threshold(black_box(&p)))
    });
    c.bench_function("solve_zstar", |b| b.iter(|| solve_zstar(black_box(&p))));
    c.bench_function("variational_c", |b| {
        b.iter(|| variational_c(black_box(3.0), black_box(4.2), black_box(2.0), &p))
    });
}

fn curves_and_surface(c: &mut Criterion) {
    let p = reference_params();
    let opts = SolverOptions {
        n_steps: 500,
        stepper: Stepper::Heun,
        ..Default::default()
    };
    let mut g = c.benchmark_group("curves");
    g.sample_size(10);
    g.bench_function("solve_all_heun_500", |b| b.iter(|| solve_all(black_box(&p), &opts)));
    g.finish();

    let s = ValueSurface::new(solve_all(&p, &opts).expect("reference curves solve")).expect("surface builds");
    c.bench_function("eval_value", |b| {
        b.iter(|| s.eval_value(black_box(3.7), black_box(1.3)))
    });
    c.bench_function("eval_partials", |b| {
        b.iter(|| s.eval_partials(black_box(3.7), black_box(1.3)))
    });

    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    let o = SimOptions {
        n_paths: 1_000,
        ..SimOptions::for_params(&p, 1)
    };
    g.bench_function("two_curve_1000_paths", |b| {
        b.iter(|| simulate(&StrategySpec::TwoCurve(&s), black_box(3.0), 1.0, &p, &o))
    });
    g.bench_function("constant_rate_1000_paths", |b| {
        b.iter(|| simulate(&StrategySpec::ConstantRate(3.0), black_box(10.0), 0.0, &p, &o))
    });
    g.finish();
}

criterion_group!(benches, one_dimensional, curves_and_surface);
criterion_main!(benches);
