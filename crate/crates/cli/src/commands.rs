use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde::{Deserialize, Serialize};

use reclass_core::analysis::{
    build_panel, exclude_outlier_subclasses, group_growth, group_stats, run_robustness_suite, AnalysisErrorKind,
    SuiteSpec,
};
use reclass_core::estimation::{estimate_alpha, fit_beta, fit_growth_ols, BackCorrection, ClassificationCountTable};
use reclass_core::fixtures::{proportional_additions, simulated_rate_editions, EditionPlan, FixtureConfig};
use reclass_core::io::{
    cohort_matrix_csv, count_table_csv, diff_csv, event_stream_csv, from_csv, group_stats_csv, panel_csv,
    read_count_table, read_diff, read_event_stream, read_group_stats, size_table_csv, to_csv, to_json_pretty,
    write_outputs, RunManifest, SectionReport,
};
use reclass_core::model::{exact_total, growth_factor, ModelParams, PredictedQuantities};
use reclass_core::simulator::{run, SimulationConfig, Window};
use reclass_core::snapshots::{
    diff, load_snapshot, log_log_fit, net_rates_by_filing_year, reclass_vs_size, write_snapshot, ClassLevel,
    EditionSnapshot, Manifest, SnapshotFilter,
};
use reclass_core::validation::{self, Outcome, CHECKS, KNOWN_UNATTAINABLE, PROPORTIONAL_RATE, PROPORTIONAL_SIZES};

use crate::error::{CliError, Kind, Result};
use crate::{Command, CorrectionArg, EditionArgs, FixtureCommand, FixtureKind, Mode, ModelArgs, SpecArg};

pub fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Solve { model, w0, tol, g, out } => solve(model, w0, tol, g, out),
        Command::Simulate {
            model,
            horizon,
            mode,
            w0,
            out,
        } => simulate(model, horizon, mode, w0, out),
        Command::Total { model, horizon, out } => total(model, horizon, out),
        Command::Events {
            model,
            horizon,
            starts,
            window,
            out,
        } => events(model, horizon, &starts, window, out),
        Command::Counts {
            model,
            horizon,
            w0,
            base_year,
            out,
        } => counts(model, horizon, w0, base_year, out),
        Command::Diff {
            editions,
            level,
            years,
            out,
        } => diff_cmd(&editions, level, years, out),
        Command::Rates {
            input,
            level,
            window_start,
            window,
            out,
        } => rates(&input, level, window_start, window, out),
        Command::FitBeta {
            input,
            window,
            convention,
            out,
        } => {
            let stream = read_event_stream(open(&input)?)?;
            let fit = fit_beta(&stream, window, convention.into())?;
            let manifest = RunManifest::new("fit-beta")
                .input(&input)
                .param("window", window)
                .param("convention", format!("{convention:?}"));
            emit(out, &manifest, json(&fit)?)
        }
        Command::EstimateAlpha {
            input,
            present,
            beta,
            year,
            correction,
            out,
        } => {
            let table = read_count_table(open(&input)?, present)?;
            let scheme = match correction {
                CorrectionArg::Exact => BackCorrection::exact(),
                CorrectionArg::Linear => BackCorrection::linear(),
            };
            let est = estimate_alpha(&table, beta, year, &scheme)?;
            if est.flagged {
                eprintln!("warning: alpha estimate {} lies outside (0, 1)", est.alpha_hat);
            }
            let manifest = RunManifest::new("estimate-alpha")
                .input(&input)
                .param("present", present)
                .param("beta", beta)
                .param("year", year)
                .param("correction", scheme);
            emit(out, &manifest, json(&est)?)
        }
        Command::FitGrowth { input, years, out } => {
            let rows: Vec<SeriesRow> = from_csv(open(&input)?)?;
            let series: Vec<(i32, f64)> = rows.iter().map(|r| (r.year, r.count)).collect();
            let fit = fit_growth_ols(&series, years)?;
            let manifest = RunManifest::new("fit-growth").input(&input).param("years", years);
            emit(out, &manifest, json(&fit)?)
        }
        Command::Panel {
            input,
            level,
            years,
            out,
        } => {
            let snap = load(&input, "edition", &SnapshotFilter::default())?;
            let panel = build_panel(&snap, level, years);
            let manifest = RunManifest::new("panel")
                .input(&input)
                .param("level", level.to_string())
                .param("years", years);
            emit(out, &manifest, panel_csv(&panel)?)
        }
        Command::Groups {
            input,
            level,
            years,
            recent,
            out,
        } => groups(&input, level, years, recent, out),
        Command::Size { editions, level, out } => size(&editions, level, out),
        Command::Regress {
            input,
            spec,
            exclude_above,
            out,
        } => regress(&input, spec, exclude_above, out),
        Command::ClassGrowth {
            input,
            level,
            class,
            years,
            mode,
        } => {
            let snap = load(&input, "edition", &SnapshotFilter::default())?;
            let panel = build_panel(&snap, level, Some(years));
            let g = group_growth(&panel, &class, years, mode)?;
            let report = serde_json::json!({ "class_id": class, "years": years, "g": g });
            emit(None, &RunManifest::new("class-growth"), json(&report)?)
        }
        Command::Validate { only } => validate(only),
        Command::Fixtures {
            command:
                FixtureCommand::Generate {
                    out_dir,
                    kind,
                    seed,
                    families,
                    alpha,
                    beta,
                    window_start,
                    window,
                    base_year,
                },
        } => fixtures(FixtureArgs {
            out_dir,
            kind,
            seed,
            families,
            alpha,
            beta,
            window_start,
            window,
            base_year,
        }),
    }
}

// ---------------------------------------------------------------------------
// output plumbing
// ---------------------------------------------------------------------------

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        kind: Kind::Io,
        message: format!("{}: {e}", path.display()),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| io_error(path, e))
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    Ok(to_json_pretty(value)?)
}

/// Writes to `out` with a sidecar manifest, or to stdout.
fn emit(out: Option<PathBuf>, manifest: &RunManifest, bytes: Vec<u8>) -> Result<ExitCode> {
    match out {
        Some(path) => write_outputs(manifest, &[(path, bytes)])?,
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| io_error(Path::new("<stdout>"), e))?,
    }
    Ok(ExitCode::SUCCESS)
}

fn load(path: &Path, label: &str, filter: &SnapshotFilter) -> Result<EditionSnapshot> {
    let (snap, report) = load_snapshot(path, label, filter)?;
    if !report.rejected.is_empty() {
        eprintln!(
            "warning: {}: {} rows rejected (first: line {}: {})",
            path.display(),
            report.rejected.len(),
            report.rejected[0].line,
            report.rejected[0].message
        );
    }
    Ok(snap)
}

fn edition_paths(args: &EditionArgs) -> Result<(PathBuf, PathBuf)> {
    match &args.manifest {
        Some(m) => {
            let manifest = Manifest::load(m)?;
            Ok((
                manifest.path(&args.earlier)?.to_path_buf(),
                manifest.path(&args.later)?.to_path_buf(),
            ))
        }
        None => Ok((PathBuf::from(&args.earlier), PathBuf::from(&args.later))),
    }
}

fn load_editions(
    args: &EditionArgs,
    filter: &SnapshotFilter,
) -> Result<(EditionSnapshot, EditionSnapshot, RunManifest)> {
    let (a, b) = edition_paths(args)?;
    let earlier = load(&a, &args.earlier, filter)?;
    let later = load(&b, &args.later, filter)?;
    let mut manifest = RunManifest::new("").input(&a).input(&b);
    if let Some(m) = &args.manifest {
        manifest = manifest.input(m);
    }
    Ok((earlier, later, manifest))
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SolveReport {
    alpha: f64,
    beta: f64,
    g: f64,
    n0: f64,
    residual: f64,
    iterations: usize,
    /// Growth factor the derived quantities were evaluated at, when not the root.
    #[serde(skip_serializing_if = "Option::is_none")]
    g_evaluated: Option<f64>,
    #[serde(rename = "T")]
    decline_time: f64,
    #[serde(rename = "V")]
    reclass_proportion: f64,
    #[serde(rename = "W", skip_serializing_if = "Option::is_none")]
    class_per_patent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    w0: Option<f64>,
}

fn solve(model: ModelArgs, w0: Option<f64>, tol: f64, g_eval: Option<f64>, out: Option<PathBuf>) -> Result<ExitCode> {
    if let Some(w) = w0 {
        if !(w > 0.0 && w.is_finite()) {
            return Err(CliError::validation(format!("w0 must be positive, got {w}")));
        }
    }
    let params = ModelParams::new(model.alpha, model.beta)?;
    let sol = growth_factor(params, tol)?;
    let q = PredictedQuantities::from_growth(params, g_eval.unwrap_or(sol.g), w0)?;
    let report = SolveReport {
        alpha: params.alpha,
        beta: params.beta,
        g: sol.g,
        n0: sol.n0,
        residual: sol.residual,
        iterations: sol.iterations,
        g_evaluated: g_eval,
        decline_time: q.decline_time_t,
        reclass_proportion: q.reclass_proportion_v,
        class_per_patent: q.class_per_patent_w,
        w0,
    };
    let manifest = RunManifest::new("solve")
        .param("alpha", params.alpha)
        .param("beta", params.beta)
        .param("tol", tol)
        .param("w0", w0)
        .param("g", g_eval);
    emit(out, &manifest, json(&report)?)
}

fn simulate(model: ModelArgs, horizon: usize, mode: Mode, w0: Option<f64>, out: Option<PathBuf>) -> Result<ExitCode> {
    let params = ModelParams::dynamics(model.alpha, model.beta)?;
    let mut config = SimulationConfig::canonical(params, horizon);
    match (mode, w0) {
        (Mode::Classifications, Some(w)) => config = config.with_classifications(w),
        (Mode::Classifications, None) => {
            return Err(CliError::validation("--mode classifications needs --w0"));
        }
        (Mode::Patents, Some(_)) => {
            return Err(CliError::validation("--w0 only applies to --mode classifications"));
        }
        (Mode::Patents, None) => {}
    }
    let m = run(&config)?;
    let manifest = RunManifest::new("simulate")
        .param("alpha", params.alpha)
        .param("beta", params.beta)
        .param("horizon", horizon)
        .param("mode", config.mode)
        .param("w0", w0);
    emit(out, &manifest, cohort_matrix_csv(&m)?)
}

#[derive(Serialize, Deserialize)]
struct TotalRow {
    t: usize,
    total: f64,
}

fn total(model: ModelArgs, horizon: usize, out: Option<PathBuf>) -> Result<ExitCode> {
    let params = ModelParams::dynamics(model.alpha, model.beta)?;
    let rows: Vec<TotalRow> = (0..=horizon)
        .map(|t| TotalRow {
            t,
            total: exact_total(params, t),
        })
        .collect();
    if let Some(r) = rows.iter().find(|r| !r.total.is_finite()) {
        return Err(CliError::numerical(format!("total overflows at t = {}", r.t)));
    }
    let manifest = RunManifest::new("total")
        .param("alpha", params.alpha)
        .param("beta", params.beta)
        .param("horizon", horizon);
    emit(out, &manifest, to_csv(rows)?)
}

fn events(model: ModelArgs, horizon: usize, starts: &[usize], window: u32, out: Option<PathBuf>) -> Result<ExitCode> {
    let params = ModelParams::dynamics(model.alpha, model.beta)?;
    let m = run(&SimulationConfig::canonical(params, horizon))?;
    let windows: Vec<Window> = starts.iter().map(|&s| Window::new(s, window as usize)).collect();
    let stream = m.emit_reclass_events(&windows)?;
    let manifest = RunManifest::new("events")
        .param("alpha", params.alpha)
        .param("beta", params.beta)
        .param("horizon", horizon)
        .param("starts", starts)
        .param("window", window);
    emit(out, &manifest, event_stream_csv(&stream)?)
}

fn counts(model: ModelArgs, horizon: usize, w0: f64, base_year: i32, out: Option<PathBuf>) -> Result<ExitCode> {
    let params = ModelParams::dynamics(model.alpha, model.beta)?;
    let m = run(&SimulationConfig::canonical(params, horizon).with_classifications(w0))?;
    let table = ClassificationCountTable::from_matrix(&m, base_year);
    let manifest = RunManifest::new("counts")
        .param("alpha", params.alpha)
        .param("beta", params.beta)
        .param("horizon", horizon)
        .param("w0", w0)
        .param("base_year", base_year);
    emit(out, &manifest, count_table_csv(&table)?)
}

// ---------------------------------------------------------------------------
// snapshots
// ---------------------------------------------------------------------------

fn diff_cmd(
    editions: &EditionArgs,
    level: ClassLevel,
    years: Option<(i32, i32)>,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let filter = years.map(|(a, b)| SnapshotFilter::years(a, b)).unwrap_or_default();
    let (earlier, later, manifest) = load_editions(editions, &filter)?;
    let d = diff(&earlier, &later, level)?;
    let manifest = RunManifest {
        command: "diff".into(),
        ..manifest
    }
    .param("level", level.to_string())
    .param("years", years);
    emit(out, &manifest, diff_csv(&d)?)
}

fn rates(input: &Path, level: ClassLevel, window_start: i32, window: u32, out: Option<PathBuf>) -> Result<ExitCode> {
    if window == 0 {
        return Err(CliError::validation("--window must be at least 1"));
    }
    let d = read_diff(open(input)?, level)?;
    let rates = net_rates_by_filing_year(&d, window_start, window);
    if !rates.skipped.is_empty() {
        eprintln!("note: filing years without baseline skipped: {:?}", rates.skipped);
    }
    let manifest = RunManifest::new("rates")
        .input(input)
        .param("level", level.to_string())
        .param("window_start", window_start)
        .param("window", window);
    emit(out, &manifest, event_stream_csv(&rates.stream)?)
}

fn size(editions: &EditionArgs, level: ClassLevel, out: Option<PathBuf>) -> Result<ExitCode> {
    let (earlier, later, manifest) = load_editions(editions, &SnapshotFilter::default())?;
    let d = diff(&earlier, &later, level)?;
    let rows = reclass_vs_size(&d, &earlier)?;
    for (label, positive) in [("added", true), ("removed", false)] {
        match log_log_fit(&rows, positive) {
            Some(f) => eprintln!(
                "{label}: log-log slope {:.4}, r2 {:.4}, unit-slope constant {:.4} over {} classes",
                f.slope,
                f.r2,
                f.proportionality(),
                f.n_points
            ),
            None => eprintln!("{label}: too few classes for a log-log fit"),
        }
    }
    let manifest = RunManifest {
        command: "size".into(),
        ..manifest
    }
    .param("level", level.to_string());
    emit(out, &manifest, size_table_csv(&rows)?)
}

// ---------------------------------------------------------------------------
// analysis
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct SeriesRow {
    year: i32,
    count: f64,
}

fn groups(
    input: &Path,
    level: ClassLevel,
    years: (i32, i32),
    recent: Option<Vec<i32>>,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let recent: [i32; 3] = match recent {
        Some(v) => v
            .try_into()
            .map_err(|_| CliError::validation("--recent takes exactly three years"))?,
        None => [years.1 - 2, years.1 - 1, years.1],
    };
    let snap = load(input, "edition", &SnapshotFilter::default())?;
    let panel = build_panel(&snap, level, Some(years));
    let table = group_stats(&panel, years, recent)?;
    if !table.inactive.is_empty() {
        eprintln!("note: {} classes inactive in part of the range", table.inactive.len());
    }
    let manifest = RunManifest::new("groups")
        .input(input)
        .param("level", level.to_string())
        .param("years", years)
        .param("recent", recent);
    emit(out, &manifest, group_stats_csv(&table.stats)?)
}

#[derive(Serialize)]
struct Rejection {
    section: char,
    spec: &'static str,
    reason: AnalysisErrorKind,
}

#[derive(Serialize)]
struct RegressReport {
    excluded_groups: Vec<String>,
    results: Vec<SectionReport>,
    rejected: Vec<Rejection>,
}

fn regress(input: &Path, spec: SpecArg, exclude_above: Option<f64>, out: Option<PathBuf>) -> Result<ExitCode> {
    let mut stats = read_group_stats(open(input)?)?;
    let mut excluded_groups = Vec::new();
    if let Some(threshold) = exclude_above {
        let f = exclude_outlier_subclasses(&stats, threshold);
        stats = f.kept;
        excluded_groups = f.removed;
    }
    let specs: Vec<SuiteSpec> = match spec {
        SpecArg::All => SuiteSpec::ALL.to_vec(),
        SpecArg::ClassPerFamily => vec![SuiteSpec::ClassPerFamily],
        SpecArg::YearAveraged => vec![SuiteSpec::YearAveraged],
        SpecArg::Fractional => vec![SuiteSpec::Fractional],
    };
    let mut report = RegressReport {
        excluded_groups,
        results: Vec::new(),
        rejected: Vec::new(),
    };
    for s in specs {
        let outcome = run_robustness_suite(&stats, s);
        report.results.extend(outcome.results.iter().map(SectionReport::from));
        report
            .rejected
            .extend(outcome.rejected.into_iter().map(|(section, reason)| Rejection {
                section,
                spec: s.label(),
                reason,
            }));
    }
    if report.results.is_empty() {
        return Err(CliError::numerical("no section could be fitted"));
    }
    let manifest = RunManifest::new("regress")
        .input(input)
        .param("spec", format!("{spec:?}"))
        .param("exclude_above", exclude_above);
    emit(out, &manifest, json(&report)?)
}

fn validate(only: Option<Vec<u8>>) -> Result<ExitCode> {
    let outcomes: Vec<Outcome> = match only {
        None => validation::run_all(),
        Some(ids) => {
            let mut out = Vec::new();
            for id in ids {
                let check = (1..=CHECKS.len() as u8)
                    .contains(&id)
                    .then(|| CHECKS[id as usize - 1])
                    .ok_or_else(|| CliError::validation(format!("no criterion {id}")))?;
                out.push(check());
            }
            out
        }
    };
    for o in &outcomes {
        println!("{o}");
    }
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    println!("{}/{} passed", outcomes.len() - failed.len(), outcomes.len());
    if failed.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    if failed.iter().all(|id| KNOWN_UNATTAINABLE.contains(id)) {
        println!("failures are known model limitations: {failed:?}");
    }
    Ok(Kind::Validation.exit_code())
}

// ---------------------------------------------------------------------------
// fixtures
// ---------------------------------------------------------------------------

struct FixtureArgs {
    out_dir: PathBuf,
    kind: FixtureKind,
    seed: u64,
    families: usize,
    alpha: f64,
    beta: f64,
    window_start: usize,
    window: usize,
    base_year: i32,
}

fn snapshot_bytes(snap: &EditionSnapshot) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_snapshot(snap, &mut buf)?;
    Ok(buf)
}

fn fixtures(a: FixtureArgs) -> Result<ExitCode> {
    std::fs::create_dir_all(&a.out_dir).map_err(|e| io_error(&a.out_dir, e))?;
    let mut manifest = RunManifest::new("fixtures generate").param("kind", format!("{:?}", a.kind));
    let (earlier, later, plan) = match a.kind {
        FixtureKind::Editions => {
            let plan = EditionPlan::generate(FixtureConfig {
                families: a.families,
                seed: a.seed,
                ..FixtureConfig::default()
            })
            .map_err(CliError::validation)?;
            manifest.seed = Some(a.seed);
            manifest = manifest.param("families", a.families);
            (plan.earlier("earlier"), plan.later("later"), json(&plan)?)
        }
        FixtureKind::Proportional => {
            let f = proportional_additions(&PROPORTIONAL_SIZES, PROPORTIONAL_RATE, a.base_year)
                .map_err(CliError::validation)?;
            let plan = serde_json::json!({
                "rate": f.rate,
                "donor_class": f.donor_class,
                "classes": f.plan,
            });
            manifest = manifest.param("base_year", a.base_year);
            (f.earlier, f.later, json(&plan)?)
        }
        FixtureKind::Rates => {
            let params = ModelParams::new(a.alpha, a.beta)?;
            let m = run(&SimulationConfig::canonical(params, a.window_start + a.window))?;
            let f = simulated_rate_editions(
                &m,
                Window::new(a.window_start, a.window),
                a.families as u64,
                a.base_year,
            )?;
            let plan = serde_json::json!({
                "alpha": a.alpha,
                "beta": a.beta,
                "window_start_year": f.window_start_year,
                "window_len": f.window_len,
                "filing_years": f.plan,
            });
            manifest = manifest
                .param("alpha", a.alpha)
                .param("beta", a.beta)
                .param("window_start", a.window_start)
                .param("window", a.window)
                .param("per_year", a.families)
                .param("base_year", a.base_year);
            (f.earlier, f.later, json(&plan)?)
        }
    };
    let editions = Manifest {
        editions: [
            ("earlier".to_string(), PathBuf::from("earlier.csv")),
            ("later".to_string(), PathBuf::from("later.csv")),
        ]
        .into(),
    };
    let outputs = vec![
        (a.out_dir.join("earlier.csv"), snapshot_bytes(&earlier)?),
        (a.out_dir.join("later.csv"), snapshot_bytes(&later)?),
        (a.out_dir.join("editions.toml"), editions.render().into_bytes()),
        (a.out_dir.join("plan.json"), plan),
    ];
    write_outputs(&manifest, &outputs)?;
    Ok(ExitCode::SUCCESS)
}
