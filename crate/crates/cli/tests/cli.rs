use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use reclass_core::analysis::SuiteSpec;
use reclass_core::fixtures::{EditionPlan, FixtureConfig};
use reclass_core::io::{group_stats_csv, read_diff, RunManifest};
use reclass_core::model::{class_per_patent, decline_time, exact_total, reclass_proportion, ModelParams};
use reclass_core::snapshots::ClassLevel;
use reclass_core::validation::planted_groups;
use serde_json::Value;
use tempfile::TempDir;

fn reclass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reclass"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = reclass(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    reclass(args).status.code().expect("exit code")
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).unwrap()
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("{key} missing in {v}"))
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn solve_reports_root_and_derived_quantities() {
    let v = json(&["solve", "--alpha", "0.024", "--beta", "0.4", "--w0", "1.25"]);
    let g = num(&v, "g");
    assert!(g > 1.07 && g < 1.08, "g = {g}");
    assert!((num(&v, "T") - decline_time(0.4, g).unwrap()).abs() <= 1e-12);
    assert!((num(&v, "V") - reclass_proportion(g, 0.024).unwrap()).abs() <= 1e-12);
    assert!((num(&v, "W") - class_per_patent(1.25, g, 0.024).unwrap()).abs() <= 1e-12);
}

#[test]
fn solve_at_quoted_growth_factor() {
    let v = json(&[
        "solve", "--alpha", "0.024", "--beta", "0.4", "--w0", "1.25", "--g", "1.079",
    ]);
    assert!((num(&v, "T") - 5.1).abs() <= 0.05);
    assert!((num(&v, "V") - 0.055).abs() <= 0.001);
    assert!((num(&v, "W") - 4.1).abs() <= 0.05);
}

#[test]
fn solve_without_reclassification() {
    let v = json(&["solve", "--alpha", "0.05", "--beta", "0"]);
    assert!((num(&v, "g") - 1.05).abs() <= 1e-10);
    assert_eq!(num(&v, "T"), 0.0);
    assert!(v.get("W").is_none());
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["solve", "--alpha", "1.5", "--beta", "0.4"]), 1);
    assert_eq!(code(&["solve", "--alpha", "0.05"]), 1);
    assert_eq!(code(&["solve", "--alpha", "0.05", "--beta", "-1"]), 1);
    assert_eq!(
        code(&["simulate", "--alpha", "0.5", "--beta", "1e300", "--horizon", "5"]),
        2
    );
    assert_eq!(code(&["fit-beta", "--in", "/nonexistent/events.csv"]), 3);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn simulate_horizon_zero_is_one_row() {
    assert_eq!(
        ok(&["simulate", "--alpha", "0.05", "--beta", "0.5", "--horizon", "0"]),
        "tau,t,count\n0,0,1.0\n"
    );
}

#[test]
fn simulated_totals_match_closed_form() {
    let model = ["--alpha", "0.05", "--beta", "0.5", "--horizon", "40"];
    let cohorts = ok(&[&["simulate"][..], &model].concat());
    let mut sums = vec![0.0; 41];
    for line in cohorts.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        sums[f[1].parse::<usize>().unwrap()] += f[2].parse::<f64>().unwrap();
    }
    let totals = ok(&[&["total"][..], &model].concat());
    let params = ModelParams::new(0.05, 0.5).unwrap();
    for (t, line) in totals.lines().skip(1).enumerate() {
        let total: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(((total - sums[t]) / total).abs() <= 1e-9, "t={t}");
        assert_eq!(total, exact_total(params, t));
    }
}

#[test]
fn simulate_writes_sidecar_manifest() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "cohorts.csv");
    ok(&[
        "simulate",
        "--alpha",
        "0.05",
        "--beta",
        "0.5",
        "--horizon",
        "10",
        "--out",
        &out,
    ]);
    let side = RunManifest::sidecar_path(Path::new(&out));
    let m: RunManifest = serde_json::from_slice(&fs::read(side).unwrap()).unwrap();
    assert_eq!(m.command, "simulate");
    assert_eq!(m.outputs, vec![Path::new(&out).to_path_buf()]);
    assert_eq!(m.parameters["horizon"], 10);
}

#[test]
fn failed_write_leaves_nothing_behind() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "missing/cohorts.csv");
    assert_eq!(
        code(&[
            "simulate",
            "--alpha",
            "0.05",
            "--beta",
            "0.5",
            "--horizon",
            "5",
            "--out",
            &out
        ]),
        3
    );
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn identical_editions_diff_to_zero() {
    let dir = TempDir::new().unwrap();
    let fx = path(&dir, "fx");
    ok(&["fixtures", "generate", "--out-dir", &fx, "--families", "300"]);
    let earlier = format!("{fx}/earlier.csv");
    for level in ["section", "subclass", "maingroup"] {
        let out = ok(&["diff", "--earlier", &earlier, "--later", &earlier, "--level", level]);
        let d = read_diff(out.as_bytes(), ClassLevel::Subclass).unwrap();
        assert!(!d.entries.is_empty());
        assert!(d.entries.values().all(|t| t.positive == 0 && t.negative == 0));
    }
}

#[test]
fn diff_reproduces_fixture_plan() {
    let dir = TempDir::new().unwrap();
    let fx = path(&dir, "fx");
    ok(&[
        "fixtures",
        "generate",
        "--out-dir",
        &fx,
        "--families",
        "400",
        "--seed",
        "11",
    ]);
    let plan = EditionPlan::generate(FixtureConfig {
        families: 400,
        seed: 11,
        ..FixtureConfig::default()
    })
    .unwrap();
    let manifest = format!("{fx}/editions.toml");
    for level in [ClassLevel::Section, ClassLevel::Subclass] {
        let out = ok(&[
            "diff",
            "--manifest",
            &manifest,
            "--earlier",
            "earlier",
            "--later",
            "later",
            "--level",
            &level.to_string(),
        ]);
        let got = read_diff(out.as_bytes(), level).unwrap();
        assert_eq!(got.entries, plan.expected_tallies(level).unwrap());
    }
}

#[test]
fn fit_beta_on_simulated_events() {
    let dir = TempDir::new().unwrap();
    let events = path(&dir, "events.csv");
    ok(&[
        "events",
        "--alpha",
        "0.03",
        "--beta",
        "0.45",
        "--horizon",
        "60",
        "--start",
        "40",
        "--start",
        "50",
        "--window",
        "3",
        "--out",
        &events,
    ]);
    let fit = json(&["fit-beta", "--in", &events, "--window", "3"]);
    assert!((num(&fit, "beta_hat") / 0.45 - 1.0).abs() <= 0.05);
}

#[test]
fn fit_beta_through_snapshot_pipeline() {
    let dir = TempDir::new().unwrap();
    let fx = path(&dir, "fx");
    ok(&[
        "fixtures",
        "generate",
        "--kind",
        "rates",
        "--out-dir",
        &fx,
        "--families",
        "2000",
        "--alpha",
        "0.04",
        "--beta",
        "0.35",
        "--window-start",
        "30",
        "--window",
        "1",
        "--base-year",
        "1970",
    ]);
    let d = path(&dir, "diff.csv");
    let r = path(&dir, "rates.csv");
    ok(&[
        "diff",
        "--earlier",
        &format!("{fx}/earlier.csv"),
        "--later",
        &format!("{fx}/later.csv"),
        "--out",
        &d,
    ]);
    ok(&[
        "rates",
        "--in",
        &d,
        "--window-start",
        "2000",
        "--window",
        "1",
        "--out",
        &r,
    ]);
    let fit = json(&["fit-beta", "--in", &r, "--window", "1"]);
    assert!((num(&fit, "beta_hat") / 0.35 - 1.0).abs() <= 0.05);
}

#[test]
fn estimate_alpha_on_simulated_counts() {
    let dir = TempDir::new().unwrap();
    let counts = path(&dir, "counts.csv");
    ok(&[
        "counts",
        "--alpha",
        "0.04",
        "--beta",
        "0.5",
        "--horizon",
        "40",
        "--w0",
        "1.5",
        "--base-year",
        "1980",
        "--out",
        &counts,
    ]);
    let est = json(&[
        "estimate-alpha",
        "--in",
        &counts,
        "--present",
        "2020",
        "--beta",
        "0.5",
        "--year",
        "2010",
    ]);
    assert!((num(&est, "alpha_hat") / 0.04 - 1.0).abs() <= 0.10);
    assert!((num(&est, "w0_hat") / 1.5 - 1.0).abs() <= 0.10);
}

#[test]
fn fit_growth_on_geometric_series() {
    let dir = TempDir::new().unwrap();
    let series = path(&dir, "series.csv");
    let body: String = (0..20)
        .map(|i| format!("{},{}\n", 1990 + i, 50.0 * 1.07f64.powi(i)))
        .collect();
    fs::write(&series, format!("year,count\n{body}")).unwrap();
    let fit = json(&["fit-growth", "--in", &series, "--years", "1995:2005"]);
    assert!((num(&fit, "g_hat") - 1.07).abs() <= 1e-10);
    assert_eq!(fit["n_points"], 11);
}

#[test]
fn regress_recovers_planted_coefficient() {
    let dir = TempDir::new().unwrap();
    let groups = path(&dir, "groups.csv");
    fs::write(&groups, group_stats_csv(&planted_groups(3, 0.02, 0.01)).unwrap()).unwrap();
    let report = json(&["regress", "--in", &groups, "--spec", "class-per-family"]);
    let results = report["results"].as_array().unwrap();
    assert!(!results.is_empty());
    assert!(results.iter().all(|r| r["section"] != "Y"));
    for r in results {
        let w = r["coefficients"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["name"] == SuiteSpec::ClassPerFamily.key_regressor())
            .expect("class_per_family coefficient");
        let (est, se) = (num(w, "estimate"), num(w, "std_error"));
        assert!((est - 0.02).abs() <= 3.0 * se, "{r}");
    }
}

#[test]
fn regress_without_enough_groups_is_numerical_failure() {
    let dir = TempDir::new().unwrap();
    let fx = path(&dir, "fx");
    ok(&["fixtures", "generate", "--out-dir", &fx, "--families", "500"]);
    let groups = path(&dir, "groups.csv");
    ok(&[
        "groups",
        "--in",
        &format!("{fx}/earlier.csv"),
        "--level",
        "subclass",
        "--years",
        "1995:2005",
        "--out",
        &groups,
    ]);
    assert_eq!(code(&["regress", "--in", &groups, "--spec", "class-per-family"]), 2);
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let fx = path(&dir, "fx");
    let d = path(&dir, "diff.csv");
    let mut runs = Vec::new();
    for _ in 0..2 {
        ok(&[
            "fixtures",
            "generate",
            "--out-dir",
            &fx,
            "--families",
            "250",
            "--seed",
            "9",
        ]);
        ok(&[
            "diff",
            "--manifest",
            &format!("{fx}/editions.toml"),
            "--earlier",
            "earlier",
            "--later",
            "later",
            "--out",
            &d,
        ]);
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&fx)
            .unwrap()
            .map(|e| e.unwrap().path())
            .chain([d.clone().into(), RunManifest::sidecar_path(Path::new(&d))])
            .map(|p| (p.to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        runs.push(files);
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0].len(), 10);
}

#[test]
fn validate_prints_table_and_reports_failures() {
    let out = reclass(&["validate", "--only", "1,3,12"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 3);
    assert!(text.contains("3/3 passed"));

    let out = reclass(&["validate", "--only", "9"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("[FAIL]  9"));
    assert!(text.contains("known model limitations"));

    assert_eq!(code(&["validate", "--only", "15"]), 1);
}
