use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use reclass_core::analysis::{build_panel, group_stats, run_robustness_suite, SuiteSpec};
use reclass_core::fixtures::{EditionPlan, FixtureConfig};
use reclass_core::snapshots::{diff, diff_partitioned, ClassLevel};
use reclass_core::validation::planted_groups;

fn plan(families: usize) -> EditionPlan {
    EditionPlan::generate(FixtureConfig {
        families,
        ..FixtureConfig::default()
    })
    .unwrap()
}

fn bench_diff(c: &mut Criterion) {
    let p = plan(50_000);
    let (a, b) = (p.earlier("a"), p.later("b"));
    let mut group = c.benchmark_group("diff_50k");
    for level in [ClassLevel::Section, ClassLevel::Subclass, ClassLevel::MainGroup] {
        group.bench_with_input(BenchmarkId::new("serial", level), &level, |bench, &level| {
            bench.iter(|| diff(&a, &b, level))
        });
    }
    group.bench_function("partitioned_subclass", |bench| {
        bench.iter(|| diff_partitioned(&a, &b, ClassLevel::Subclass, 8))
    });
    group.finish();
}

fn bench_panel(c: &mut Criterion) {
    let snap = plan(50_000).earlier("e");
    c.bench_function("panel_and_groups_50k", |bench| {
        bench.iter(|| {
            let panel = build_panel(&snap, ClassLevel::Subclass, Some((1995, 2010)));
            group_stats(&panel, (1995, 2010), [2008, 2009, 2010])
        })
    });
}

fn bench_regressions(c: &mut Criterion) {
    let stats = planted_groups(1, 0.02, 0.01);
    c.bench_function("robustness_suite", |bench| {
        bench.iter(|| SuiteSpec::ALL.map(|s| run_robustness_suite(black_box(&stats), s)))
    });
}

criterion_group!(benches, bench_diff, bench_panel, bench_regressions);
criterion_main!(benches);
