use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use reclass_core::model::{exact_cohort_count, exact_total, growth_factor, ModelParams, DEFAULT_TOL};
use reclass_core::simulator::{run, SimulationConfig};

fn params() -> ModelParams {
    ModelParams::new(0.05, 0.5).unwrap()
}

fn bench_growth_factor(c: &mut Criterion) {
    c.bench_function("growth_factor", |b| {
        b.iter(|| growth_factor(black_box(params()), DEFAULT_TOL))
    });
}

fn bench_closed_forms(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_total");
    for t in [50usize, 200, 1000] {
        group.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            b.iter(|| exact_total(params(), black_box(t)))
        });
    }
    group.finish();
    c.bench_function("exact_cohort_count", |b| {
        b.iter(|| exact_cohort_count(params(), black_box(120), black_box(300)))
    });
}

fn bench_simulator(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    for horizon in [60usize, 300, 1000] {
        let config = SimulationConfig::canonical(params(), horizon);
        group.bench_with_input(BenchmarkId::from_parameter(horizon), &config, |b, cfg| {
            b.iter(|| run(cfg))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_growth_factor, bench_closed_forms, bench_simulator);
criterion_main!(benches);
