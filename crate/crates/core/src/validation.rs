//! Acceptance checks run by `reclass validate` and the acceptance test target.
//! Every tolerance is pinned here.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{
    class_per_family, group_growth, ols, pearson_r2, run_robustness_suite, ClassPanel, GroupStats, GrowthMode,
    SuiteSpec,
};
use crate::estimation::{
    estimate_alpha, fit_beta, fit_growth_ols, BackCorrection, ClassificationCountTable, LagConvention,
};
use crate::fixtures::{proportional_additions, simulated_rate_editions, EditionPlan, FixtureConfig};
use crate::model::{
    class_per_patent, decline_time, exact_cohort_count, exact_total, generating_function_closed, growth_factor,
    identity_check, reclass_proportion, slow_growth_approx, ModelParams, DEFAULT_TOL,
};
use crate::simulator::{run, CohortMatrix, ReclassEventStream, ReclassRecord, SimulationConfig, Window};
use crate::snapshots::{diff, log_log_fit, net_rates_by_filing_year, reclass_vs_size, ClassLevel};

pub const SEED: u64 = 20_240_611;

pub const ALPHA_GRID: [f64; 4] = [0.01, 0.025, 0.05, 0.1];
pub const BETA_GRID: [f64; 5] = [0.0, 0.1, 0.4, 0.5, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {:<34} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }
}

fn outcome(id: u8, name: &'static str, run: impl FnOnce() -> Result<(bool, String), String>) -> Outcome {
    let (passed, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
    Outcome {
        id,
        name,
        passed,
        detail,
    }
}

fn params(alpha: f64, beta: f64) -> Result<ModelParams, String> {
    ModelParams::new(alpha, beta).map_err(|e| e.to_string())
}

fn root(alpha: f64, beta: f64) -> Result<f64, String> {
    Ok(growth_factor(params(alpha, beta)?, DEFAULT_TOL)
        .map_err(|e| e.to_string())?
        .g)
}

fn simulate(config: &SimulationConfig) -> Result<CohortMatrix, String> {
    run(config).map_err(|e| e.to_string())
}

/// Root of the growth equation for empirically sized parameters.
pub fn growth_factor_band() -> Outcome {
    outcome(1, "growth factor in (1.07, 1.08)", || {
        let mut ok = true;
        let mut parts = Vec::new();
        for alpha in [0.024, 0.027] {
            let g = root(alpha, 0.4)?;
            ok &= g > 1.07 && g < 1.08;
            parts.push(format!("a={alpha}: g={g:.5}"));
        }
        Ok((ok, parts.join(", ")))
    })
}

pub fn decline_time_values() -> Outcome {
    outcome(2, "decline time 5.1 / 7.6", || {
        let t1 = decline_time(0.4, 1.079).map_err(|e| e.to_string())?;
        let t2 = decline_time(0.6, 1.079).map_err(|e| e.to_string())?;
        let ok = (t1 - 5.1).abs() <= 0.05 && (t2 - 7.6).abs() <= 0.05;
        Ok((ok, format!("T={t1:.3}, T={t2:.3} (tol 0.05)")))
    })
}

pub fn reclass_proportion_value() -> Outcome {
    outcome(3, "reclassification proportion 0.056", || {
        let v = reclass_proportion(1.08, 0.024).map_err(|e| e.to_string())?;
        Ok(((v - 0.056).abs() <= 0.001, format!("V={v:.4} (tol 0.001)")))
    })
}

pub fn class_per_patent_interval() -> Outcome {
    outcome(4, "classifications per patent 3.7..4.1", || {
        let hi = class_per_patent(1.25, 1.079, 0.024).map_err(|e| e.to_string())?;
        let lo = class_per_patent(1.25, 1.079, 0.027).map_err(|e| e.to_string())?;
        let ok = (lo - 3.7).abs() <= 0.05 && (hi - 4.1).abs() <= 0.05 && lo < hi;
        Ok((ok, format!("W in [{lo:.3}, {hi:.3}] (tol 0.05)")))
    })
}

/// Closed forms against the forward recurrence on the full grid, `t ≤ 60`.
pub fn oracle_equivalence() -> Outcome {
    outcome(5, "closed forms vs recurrence", || {
        let mut worst: f64 = 0.0;
        for alpha in ALPHA_GRID {
            for beta in BETA_GRID {
                let p = params(alpha, beta)?;
                let m = simulate(&SimulationConfig::canonical(p, 60))?;
                for t in 0..=60 {
                    for tau in 0..=t {
                        let want = m.cell(tau, t);
                        let got = exact_cohort_count(p, tau, t).map_err(|e| e.to_string())?;
                        worst = worst.max(rel_err(got, want));
                    }
                    worst = worst.max(rel_err(exact_total(p, t), m.total(t)));
                }
            }
        }
        Ok((worst <= 1e-9, format!("max rel err {worst:.2e} (tol 1e-9)")))
    })
}

fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// 400-term series of simulated totals against the closed form at `z = 0.9/g`.
pub fn generating_function() -> Outcome {
    outcome(6, "generating function closed form", || {
        let mut worst: f64 = 0.0;
        for alpha in ALPHA_GRID {
            for beta in BETA_GRID {
                let p = params(alpha, beta)?;
                let z = 0.9 / root(alpha, beta)?;
                let m = simulate(&SimulationConfig::canonical(p, 399))?;
                let mut series = 0.0;
                let mut zt = 1.0;
                for t in 0..400 {
                    series += m.total(t) * zt;
                    zt *= z;
                }
                let closed = generating_function_closed(p, z).map_err(|e| e.to_string())?;
                worst = worst.max(rel_err(series, closed));
            }
        }
        Ok((worst <= 1e-6, format!("max rel err {worst:.2e} (tol 1e-6)")))
    })
}

/// Bracketing and monotonicity of the root over random parameters.
pub fn bounds_and_monotonicity() -> Outcome {
    outcome(7, "root bounds and monotonicity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let mut failures = Vec::new();
        for _ in 0..500 {
            let alpha = 0.2 * (1.0 - rng.random::<f64>());
            let beta = rng.random::<f64>();
            let g = root(alpha, beta)?;
            if !(g >= 1.0 + alpha && g < 1.0 + alpha + beta) {
                failures.push(format!("bounds a={alpha:.4} b={beta:.4}"));
            }
            let step = 1e-3;
            if root(alpha + step, beta)? <= g {
                failures.push(format!("alpha-monotone a={alpha:.4} b={beta:.4}"));
            }
            if beta > 0.0 && beta + step <= 1.0 && root(alpha, beta + step)? <= g {
                failures.push(format!("beta-monotone a={alpha:.4} b={beta:.4}"));
            }
        }
        let detail = if failures.is_empty() {
            "500 draws".to_string()
        } else {
            format!("{} failures, first: {}", failures.len(), failures[0])
        };
        Ok((failures.is_empty(), detail))
    })
}

pub fn slow_growth() -> Outcome {
    outcome(8, "slow-growth approximation", || {
        let mut worst: f64 = 0.0;
        for alpha in [1e-4, 3e-5, 1e-5, 1e-6, 1e-8] {
            for k in 0..=20 {
                let beta = k as f64 / 20.0;
                let p = params(alpha, beta)?;
                let approx = slow_growth_approx(p) - 1.0;
                let g = root(alpha, beta)?;
                worst = worst.max(((g - 1.0) - approx).abs() / approx);
            }
        }
        Ok((worst <= 0.10, format!("max rel dev {worst:.4} (tol 0.10)")))
    })
}

pub const PEAK_ALPHAS: [f64; 5] = [0.02, 0.03, 0.04, 0.05, 0.06];
pub const PEAK_BETAS: [f64; 4] = [0.3, 0.4, 0.5, 0.6];

/// Peak filing year lags the present by about the decline time.
pub fn peak_location() -> Outcome {
    outcome(9, "peak lag matches decline time", || {
        let mut worst = (0.0, String::new());
        for alpha in PEAK_ALPHAS {
            for beta in PEAK_BETAS {
                let p = params(alpha, beta)?;
                let m = simulate(&SimulationConfig::canonical(p, 120))?;
                let t_decline = beta / (root(alpha, beta)? - 1.0);
                for t in [50, 60, 80, 100, 120] {
                    let peak = m.peak_filing_year(t).map_err(|e| e.to_string())?;
                    let dev = ((t - peak) as f64 - t_decline).abs();
                    if dev > worst.0 {
                        worst = (dev, format!("a={alpha} b={beta} t={t} lag={}", t - peak));
                    }
                }
            }
        }
        Ok((
            worst.0 <= 1.0,
            format!("max |lag - T| {:.3} at {} (tol 1)", worst.0, worst.1),
        ))
    })
}

pub fn v_convergence() -> Outcome {
    outcome(10, "reclassification share converges", || {
        let mut worst: f64 = 0.0;
        for alpha in PEAK_ALPHAS {
            for beta in PEAK_BETAS {
                let p = params(alpha, beta)?;
                let m = simulate(&SimulationConfig::canonical(p, 300))?;
                let v = m.reclassified_total(300).map_err(|e| e.to_string())? / m.total(300);
                let want = root(alpha, beta)? - 1.0 - alpha;
                worst = worst.max(rel_err(v, want));
            }
        }
        Ok((worst <= 0.05, format!("max rel err {worst:.4} (tol 0.05)")))
    })
}

/// β and α recovered from simulated data, and exact recovery on noiseless
/// linear inputs.
pub fn estimation_round_trips() -> Outcome {
    outcome(11, "estimation round trips", || {
        let mut beta_err: f64 = 0.0;
        let mut alpha_err: f64 = 0.0;
        for beta in [0.2, 0.4, 0.6, 0.8] {
            let p = params(0.03, beta)?;
            let m = simulate(&SimulationConfig::canonical(p, 60).with_classifications(1.25))?;

            let stream = m
                .emit_reclass_events(&[Window::new(50, 3), Window::new(53, 3)])
                .map_err(|e| e.to_string())?;
            let fit = fit_beta(&stream, 3, LagConvention::EventYear).map_err(|e| e.to_string())?;
            beta_err = beta_err.max(rel_err(fit.beta_hat, beta));

            let fx = simulated_rate_editions(&m, Window::new(50, 1), 20_000, 1950).map_err(|e| e.to_string())?;
            let d = diff(&fx.earlier, &fx.later, ClassLevel::Subclass).map_err(|e| e.to_string())?;
            let rates = net_rates_by_filing_year(&d, fx.window_start_year, fx.window_len);
            let fit = fit_beta(&rates.stream, fx.window_len, LagConvention::EventYear).map_err(|e| e.to_string())?;
            beta_err = beta_err.max(rel_err(fit.beta_hat, beta));

            let table = ClassificationCountTable::from_matrix(&m, 1950);
            for year in [1990, 2000, 2005] {
                let est = estimate_alpha(&table, beta, year, &BackCorrection::exact()).map_err(|e| e.to_string())?;
                alpha_err = alpha_err.max(rel_err(est.alpha_hat, 0.03));
            }
        }

        let mut exact_err: f64 = 0.0;
        let planted = 0.37;
        let records = (1990..2012)
            .map(|tau| {
                let h = 1.0 / (2014 - tau) as f64;
                ReclassRecord {
                    filing_year: tau,
                    window_start: 2013,
                    event_year: 2014,
                    reclassified: planted * h * 1000.0,
                    classifications_before: 1000.0,
                }
            })
            .collect();
        let fit = fit_beta(&ReclassEventStream { records }, 1, LagConvention::EventYear).map_err(|e| e.to_string())?;
        exact_err = exact_err.max(rel_err(fit.beta_hat, planted));
        let series: Vec<(i32, f64)> = (0..25).map(|i| (2000 + i, 50.0 * 1.08f64.powi(i))).collect();
        let g = fit_growth_ols(&series, None).map_err(|e| e.to_string())?.g_hat;
        exact_err = exact_err.max(rel_err(g, 1.08));

        let ok = beta_err <= 0.05 && alpha_err <= 0.10 && exact_err <= 1e-10;
        Ok((
            ok,
            format!(
                "beta {beta_err:.2e} (tol 0.05), alpha {alpha_err:.2e} (tol 0.10), linear {exact_err:.1e} (tol 1e-10)"
            ),
        ))
    })
}

pub fn binomial_identity() -> Outcome {
    outcome(12, "binomial convolution identity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 12);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let beta = rng.random_range(0.0..2.0);
            let tau = rng.random_range(1..=12usize);
            let u = rng.random_range(0..tau);
            let (lhs, rhs) = identity_check(beta, tau, u).map_err(|e| e.to_string())?;
            worst = worst.max(rel_err(lhs, rhs));
        }
        Ok((worst <= 1e-9, format!("max rel err {worst:.2e} (tol 1e-9)")))
    })
}

pub const PROPORTIONAL_SIZES: [u64; 8] = [20, 40, 60, 100, 200, 400, 1000, 2000];
pub const PROPORTIONAL_RATE: f64 = 0.05;

pub fn snapshot_pipeline() -> Outcome {
    outcome(13, "snapshot diff and size scaling", || {
        let plan = EditionPlan::generate(FixtureConfig {
            seed: SEED,
            ..FixtureConfig::default()
        })?;
        let (a, b) = (plan.earlier("earlier"), plan.later("later"));
        let mut exact = true;
        for level in [ClassLevel::Subclass, ClassLevel::Section] {
            let got = diff(&a, &b, level).map_err(|e| e.to_string())?;
            exact &= Some(got.entries) == plan.expected_tallies(level);
        }

        let fx = proportional_additions(&PROPORTIONAL_SIZES, PROPORTIONAL_RATE, 2010)?;
        let d = diff(&fx.earlier, &fx.later, ClassLevel::Subclass).map_err(|e| e.to_string())?;
        let rows = reclass_vs_size(&d, &fx.earlier).map_err(|e| e.to_string())?;
        let fit = log_log_fit(&rows, true).ok_or("no positive rows")?;
        let slope_ok = (fit.slope - 1.0).abs() <= 0.01;
        let const_ok = rel_err(fit.proportionality(), PROPORTIONAL_RATE) <= 1e-9;
        Ok((
            exact && slope_ok && const_ok,
            format!(
                "tallies exact={exact}, slope {:.4} (tol 0.01), constant {:.6} (planted {PROPORTIONAL_RATE})",
                fit.slope,
                fit.proportionality()
            ),
        ))
    })
}

/// Synthetic groups with growth planted as `0.01 + c·w + 0.002·log total + noise`.
pub fn planted_groups(seed: u64, c: f64, noise: f64) -> Vec<GroupStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for sec in ['A', 'B', 'G', 'H', 'Y'] {
        for i in 0..60 {
            let w = rng.random_range(1.0..6.0);
            let lt = rng.random_range(3.0..9.0);
            let recent = [lt - 2.0, lt - 1.9, lt - 1.7].map(|v: f64| v + rng.random_range(-0.3..0.3));
            let g = 1.01 + c * w + 0.002 * lt + rng.random_range(-noise..noise);
            out.push(GroupStats {
                class_id: format!("{sec}{:02}K{i}", 1 + i % 97),
                g_k: g,
                w_k: w,
                w_k_year_avg: w + rng.random_range(-0.1..0.1),
                g_k_fractional: g + rng.random_range(-noise..noise),
                log_group_total: lt,
                log_group_total_fractional: lt - 0.7,
                log_recent: recent,
            });
        }
    }
    out
}

/// `(g_k − 1, w_k)` for single-class simulations sharing α and W₀.
pub fn simulated_cross_class(alpha: f64, w0: f64, betas: &[f64]) -> Result<Vec<(f64, f64)>, String> {
    betas
        .iter()
        .map(|&beta| {
            let p = params(alpha, beta)?;
            let m = simulate(&SimulationConfig::canonical(p, 300).with_classifications(w0))?;
            let panel = ClassPanel::from_matrix("C", &m, 300, 0).map_err(|e| e.to_string())?;
            let g = group_growth(&panel, "C", (200, 290), GrowthMode::Unique).map_err(|e| e.to_string())?;
            let w = class_per_family(&panel, "C").map_err(|e| e.to_string())?;
            Ok((g - 1.0, w))
        })
        .collect()
}

pub fn regression_layer() -> Outcome {
    outcome(14, "regression layer", || {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 14);
        let n = 200;
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 0.5 - cols[0][i] + 0.25 * cols[1][i] + 3.0 * cols[2][i] + rng.random_range(-1.0..1.0))
            .collect();
        let named: Vec<(&str, &[f64])> = vec![("a", &cols[0]), ("b", &cols[1]), ("c", &cols[2])];
        let fit = ols(&y, &named, true).map_err(|e| e.to_string())?;
        let mut design = vec![vec![1.0; n]];
        design.extend(cols.iter().cloned());
        let oracle = normal_equations(&y, &design);
        let ols_err = fit
            .coefficients
            .iter()
            .zip(&oracle)
            .map(|(c, o)| (c.estimate - o).abs())
            .fold(0.0, f64::max);

        let planted = 0.01;
        let stats = planted_groups(SEED + 14, planted, 0.01);
        let mut worst_z: f64 = 0.0;
        let mut fitted = 0;
        for spec in SuiteSpec::ALL {
            let out = run_robustness_suite(&stats, spec);
            if !out.rejected.is_empty() {
                return Err(format!("{spec:?} rejected {:?}", out.rejected));
            }
            for r in &out.results {
                let c = r.result.coefficient(spec.key_regressor()).ok_or("missing regressor")?;
                worst_z = worst_z.max((c.estimate - planted).abs() / c.std_error);
                fitted += 1;
            }
        }

        let coverage = planted_coverage(COVERAGE_REPLICATES, planted)?;

        let (alpha, w0) = (0.024, 1.25);
        let betas: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();
        let pts = simulated_cross_class(alpha, w0, &betas)?;
        let (gs, ws): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let slope = ols(&gs, &[("w", &ws)], true)
            .map_err(|e| e.to_string())?
            .coefficient("w")
            .ok_or("missing slope")?
            .estimate;
        let slope_err = rel_err(slope, alpha / w0);
        let r2 = pearson_r2(&ws, &gs).map_err(|e| e.to_string())?;

        let ok =
            ols_err <= 1e-8 && worst_z <= 2.0 && fitted == 12 && COVERAGE_BAND.contains(&coverage) && slope_err <= 0.15;
        Ok((
            ok,
            format!(
                "ols vs normal eq {ols_err:.1e} (tol 1e-8), planted |z| {worst_z:.2} (tol 2), \
                 2-SE coverage {coverage:.4} (band {:.3}..{:.3}), \
                 cross-class slope err {slope_err:.3} (tol 0.15, r2 {r2:.3})",
                COVERAGE_BAND.start(),
                COVERAGE_BAND.end()
            ),
        ))
    })
}

pub const COVERAGE_REPLICATES: u64 = 200;
/// Nominal two-SE coverage is about 0.953 at these degrees of freedom; the
/// band is ±3.5 binomial standard deviations over 2400 fits.
pub const COVERAGE_BAND: std::ops::RangeInclusive<f64> = 0.938..=0.968;

/// Share of section fits, over replicate planted fixtures, whose key
/// coefficient lies within two standard errors of the planted value.
pub fn planted_coverage(replicates: u64, planted: f64) -> Result<f64, String> {
    let (mut inside, mut total) = (0usize, 0usize);
    for seed in 0..replicates {
        let stats = planted_groups(SEED + 1000 + seed, planted, 0.01);
        for spec in SuiteSpec::ALL {
            for r in run_robustness_suite(&stats, spec).results {
                let c = r.result.coefficient(spec.key_regressor()).ok_or("missing regressor")?;
                inside += usize::from((c.estimate - planted).abs() <= 2.0 * c.std_error);
                total += 1;
            }
        }
    }
    Ok(inside as f64 / total as f64)
}

/// Normal equations solved by Gauss-Jordan elimination with partial pivoting.
/// Kept apart from the QR path in [`ols`] so the two can check each other.
pub fn normal_equations(y: &[f64], cols: &[Vec<f64>]) -> Vec<f64> {
    let p = cols.len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = cols[i].iter().zip(&cols[j]).map(|(u, v)| u * v).sum();
        }
        a[i][p] = cols[i].iter().zip(y).map(|(u, v)| u * v).sum();
    }
    for c in 0..p {
        let piv = (c..p)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .expect("nonempty range");
        a.swap(c, piv);
        let d = a[c][c];
        for v in a[c].iter_mut() {
            *v /= d;
        }
        let row_c = a[c].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i != c {
                let f = row[c];
                for (v, rc) in row.iter_mut().zip(&row_c) {
                    *v -= f * rc;
                }
            }
        }
    }
    a.iter().map(|row| row[p]).collect()
}

/// Criteria the model itself cannot meet everywhere in the prescribed box.
///
/// 9: the integer peak lag sits in `(T−1, T]` once the profile has settled,
/// but at α = 0.02, β = 0.3, t = 50 the cohorts at lags 5 and 6 are within
/// 0.014% of each other and the transient puts the peak at lag 5, 1.014 from T.
pub const KNOWN_UNATTAINABLE: &[u8] = &[9];

pub type Check = fn() -> Outcome;

pub const CHECKS: [Check; 14] = [
    growth_factor_band,
    decline_time_values,
    reclass_proportion_value,
    class_per_patent_interval,
    oracle_equivalence,
    generating_function,
    bounds_and_monotonicity,
    slow_growth,
    peak_location,
    v_convergence,
    estimation_round_trips,
    binomial_identity,
    snapshot_pipeline,
    regression_layer,
];

/// Runs every check on its own thread; results come back in criterion order.
pub fn run_all() -> Vec<Outcome> {
    std::thread::scope(|s| {
        let handles: Vec<_> = CHECKS.iter().map(|c| s.spawn(c)).collect();
        handles.into_iter().map(|h| h.join().expect("check panicked")).collect()
    })
}
