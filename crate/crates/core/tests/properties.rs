use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use reclass_core::analysis::{build_panel, ols, pearson_r2};
use reclass_core::estimation::{fit_beta, fit_growth_ols, LagConvention};
use reclass_core::fixtures::{EditionPlan, FixtureConfig};
use reclass_core::io::diff_csv;
use reclass_core::model::{
    exact_cohort_count, exact_total, gen_binomial, growth_factor, growth_residual, ModelParams, DEFAULT_TOL,
};
use reclass_core::simulator::{ReclassEventStream, ReclassRecord};
use reclass_core::snapshots::{
    diff, diff_partitioned, read_snapshot, write_snapshot, ClassLevel, DiffResult, EditionSnapshot, SnapshotFilter,
};
use reclass_core::validation::{normal_equations, ALPHA_GRID, BETA_GRID};

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

#[test]
fn total_is_sum_of_cohorts() {
    for alpha in ALPHA_GRID {
        for beta in BETA_GRID {
            let p = ModelParams::new(alpha, beta).unwrap();
            for t in [0, 1, 5, 30, 60, 150] {
                let sum: f64 = (0..=t).map(|tau| exact_cohort_count(p, tau, t).unwrap()).sum();
                assert!(rel(exact_total(p, t), sum) <= 1e-12, "a={alpha} b={beta} t={t}");
            }
        }
    }
}

#[test]
fn total_ratio_approaches_root() {
    for alpha in ALPHA_GRID {
        for beta in BETA_GRID {
            let p = ModelParams::new(alpha, beta).unwrap();
            let g = growth_factor(p, DEFAULT_TOL).unwrap().g;
            let ratio = exact_total(p, 201) / exact_total(p, 200);
            assert!((ratio - g).abs() <= 1e-4, "a={alpha} b={beta}: {ratio} vs {g}");
        }
    }
}

#[test]
fn binomial_matches_gamma_form() {
    for i in 1..=50 {
        let beta = 0.1 * i as f64;
        for m in 0..=100usize {
            let x = m as f64 + beta;
            let product = gen_binomial(x, m as i64).unwrap();
            let gamma = (ln_gamma(x + 1.0) - ln_gamma(beta + 1.0) - ln_gamma(m as f64 + 1.0)).exp();
            assert!(rel(product, gamma) <= 1e-12, "beta={beta} m={m}: {product} vs {gamma}");
        }
    }
}

proptest! {
    #[test]
    fn root_is_bracketed_and_solves(alpha in 1e-4f64..0.99, beta in 0.0f64..3.0) {
        let p = ModelParams::new(alpha, beta).unwrap();
        let sol = growth_factor(p, DEFAULT_TOL).unwrap();
        prop_assert!(sol.g >= 1.0 + alpha && sol.g <= 1.0 + alpha + beta);
        prop_assert!(growth_residual(p, sol.g).abs() <= 1e-10);
    }

    #[test]
    fn root_increases_with_parameters(alpha in 1e-3f64..0.5, beta in 0.0f64..2.0, d in 1e-3f64..0.2) {
        let g = |a: f64, b: f64| growth_factor(ModelParams::new(a, b).unwrap(), DEFAULT_TOL).unwrap().g;
        let base = g(alpha, beta);
        prop_assert!(g(alpha + d, beta) > base);
        prop_assert!(g(alpha, beta + d) > base);
    }
}

// ---------------------------------------------------------------------------
// estimation
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn noiseless_beta_recovered(beta in 0.01f64..2.0, start in 1990i32..2020, window in 1u32..5) {
        let mut records = Vec::new();
        for tau in (start - 30)..start {
            for t in start + 1..=start + window as i32 {
                records.push(ReclassRecord {
                    filing_year: tau,
                    window_start: start,
                    event_year: t,
                    reclassified: beta / (t - tau) as f64 * 500.0,
                    classifications_before: 500.0,
                });
            }
        }
        let fit = fit_beta(&ReclassEventStream { records }, window, LagConvention::EventYear).unwrap();
        prop_assert!(rel(fit.beta_hat, beta) <= 1e-10);
    }

    #[test]
    fn noiseless_growth_recovered(g in 1.0001f64..1.5, c in 1.0f64..1e6, n in 3usize..40) {
        let series: Vec<(i32, f64)> = (0..n).map(|i| (1980 + i as i32, c * g.powi(i as i32))).collect();
        let fit = fit_growth_ols(&series, None).unwrap();
        prop_assert!(rel(fit.slope, g.ln()) <= 1e-10);
    }
}

// ---------------------------------------------------------------------------
// snapshots
// ---------------------------------------------------------------------------

fn plan(seed: u64, families: usize) -> EditionPlan {
    EditionPlan::generate(FixtureConfig {
        families,
        seed,
        ..FixtureConfig::default()
    })
    .unwrap()
}

fn swapped(d: &DiffResult) -> Vec<((String, i32), (u64, u64))> {
    d.entries
        .iter()
        .map(|(k, t)| (k.clone(), (t.negative, t.positive)))
        .collect()
}

fn shuffled_copy(snap: &EditionSnapshot, seed: u64) -> EditionSnapshot {
    let mut buf = Vec::new();
    write_snapshot(snap, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let header = lines.remove(0);
    lines.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let body = std::iter::once(header).chain(lines).collect::<Vec<_>>().join("\n");
    read_snapshot(body.as_bytes(), &snap.label, &SnapshotFilter::default())
        .unwrap()
        .0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn diff_is_antisymmetric(seed in any::<u64>()) {
        let p = plan(seed, 200);
        let (a, b) = (p.earlier("a"), p.later("b"));
        for level in [ClassLevel::Section, ClassLevel::Subclass, ClassLevel::MainGroup] {
            let fwd = diff(&a, &b, level).unwrap();
            let back = diff(&b, &a, level).unwrap();
            let back_pn: Vec<_> = back.entries.iter().map(|(k, t)| (k.clone(), (t.positive, t.negative))).collect();
            prop_assert_eq!(swapped(&fwd), back_pn);
        }
    }

    #[test]
    fn section_tallies_aggregate_subclasses(seed in any::<u64>()) {
        let p = plan(seed, 300);
        let (a, b) = (p.earlier("a"), p.later("b"));
        let sub = diff(&a, &b, ClassLevel::Subclass).unwrap();
        let sec = diff(&a, &b, ClassLevel::Section).unwrap();
        let mut agg: std::collections::BTreeMap<(String, i32), (u64, u64, u64)> = Default::default();
        for ((c, y), t) in &sub.entries {
            let e = agg.entry((c[..1].to_string(), *y)).or_default();
            e.0 += t.positive;
            e.1 += t.negative;
            e.2 += t.baseline;
        }
        let got: std::collections::BTreeMap<_, _> =
            sec.entries.iter().map(|(k, t)| (k.clone(), (t.positive, t.negative, t.baseline))).collect();
        prop_assert_eq!(got, agg);
    }

    #[test]
    fn output_independent_of_record_order(seed in any::<u64>(), shuffle in any::<u64>()) {
        let p = plan(seed, 150);
        let (a, b) = (p.earlier("a"), p.later("b"));
        let (a2, b2) = (shuffled_copy(&a, shuffle), shuffled_copy(&b, shuffle ^ 1));
        for level in [ClassLevel::Subclass, ClassLevel::MainGroup] {
            let x = diff_csv(&diff(&a, &b, level).unwrap()).unwrap();
            let y = diff_csv(&diff(&a2, &b2, level).unwrap()).unwrap();
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn partitioned_diff_matches_serial(seed in any::<u64>(), parts in 1usize..9) {
        let p = plan(seed, 250);
        let (a, b) = (p.earlier("a"), p.later("b"));
        let serial = diff(&a, &b, ClassLevel::Subclass).unwrap();
        prop_assert_eq!(diff_partitioned(&a, &b, ClassLevel::Subclass, parts).unwrap(), serial);
    }

    #[test]
    fn merge_is_order_independent(seed in any::<u64>()) {
        let p = plan(seed, 200);
        let (a, b) = (p.earlier("a"), p.later("b"));
        let ids: Vec<String> = a.records.keys().cloned().collect();
        let (left, right) = ids.split_at(ids.len() / 3);
        let part = |keep: &[String]| {
            let mut s = EditionSnapshot::new("p");
            for id in keep {
                s.records.insert(id.clone(), a.records[id].clone());
            }
            diff(&s, &b, ClassLevel::Subclass).unwrap()
        };
        let (x, y) = (part(left), part(right));
        prop_assert_eq!(x.clone().merge(y.clone()), y.merge(x));
    }

    #[test]
    fn fractional_counts_conserve_patents(seed in any::<u64>()) {
        let snap = plan(seed, 300).earlier("e");
        for level in [ClassLevel::Section, ClassLevel::Subclass, ClassLevel::MainGroup] {
            let panel = build_panel(&snap, level, None);
            for (y, n) in &panel.patents_by_year {
                let total: f64 = panel.classes.values().filter_map(|m| m.get(y)).map(|c| c.fractional).sum();
                prop_assert!((total - n).abs() <= 1e-9);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// analysis
// ---------------------------------------------------------------------------

fn column(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n)
}

proptest! {
    #[test]
    fn ols_matches_normal_equations(
        (x1, x2, y) in (8usize..60).prop_flat_map(|n| (column(n), column(n), column(n)))
    ) {
        prop_assume!(pearson_r2(&x1, &x2).map(|r| r < 0.95).unwrap_or(false));
        let fit = ols(&y, &[("x1", &x1), ("x2", &x2)], true).unwrap();
        let oracle = normal_equations(&y, &[vec![1.0; y.len()], x1.clone(), x2.clone()]);
        for (c, o) in fit.coefficients.iter().zip(oracle) {
            prop_assert!((c.estimate - o).abs() <= 1e-8 * (1.0 + o.abs()));
        }
        prop_assert!((0.0..=1.0).contains(&fit.r_squared));
    }

    #[test]
    fn pearson_symmetric_and_affine_invariant(
        (x, y) in (3usize..40).prop_flat_map(|n| (column(n), column(n))),
        a in 0.1f64..10.0, b in -5.0f64..5.0, c in 0.1f64..10.0, d in -5.0f64..5.0
    ) {
        let r = match pearson_r2(&x, &y) {
            Ok(r) => r,
            Err(_) => return Ok(()),
        };
        prop_assert!((r - pearson_r2(&y, &x).unwrap()).abs() <= 1e-12);
        let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let ys: Vec<f64> = y.iter().map(|v| c * v + d).collect();
        prop_assert!((r - pearson_r2(&xs, &ys).unwrap()).abs() <= 1e-9);
    }
}
