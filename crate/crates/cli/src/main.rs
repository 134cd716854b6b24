//! `reclass`: command-line front end for the growth and reclassification model.
//!
//! Tables go out as CSV and scalar bundles as JSON. Every file written with
//! `--out` gets a `<file>.manifest.json` sidecar recording how it was made.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reclass_core::analysis::GrowthMode;
use reclass_core::estimation::{LagConvention, DEFAULT_WINDOW};
use reclass_core::model::DEFAULT_TOL;
use reclass_core::snapshots::ClassLevel;

use error::{CliError, Kind};

#[derive(Debug, Parser)]
#[command(
    name = "reclass",
    version,
    about = "Growth and reclassification of patent classification systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, allow_negative_numbers = true)]
    beta: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Growth factor and derived quantities as JSON.
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        w0: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Evaluate T, V and W at this growth factor instead of the root.
        #[arg(long)]
        g: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iterate the dynamics; writes the triangular cohort table.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        horizon: usize,
        #[arg(long, value_enum, default_value_t = Mode::Patents)]
        mode: Mode,
        /// Classifications per new patent; required with `--mode classifications`.
        #[arg(long)]
        w0: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form totals n(t) for t = 0..=horizon.
    Total {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulated reclassification events over one or more windows.
    Events {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        horizon: usize,
        /// Window start (model year); repeat for several windows.
        #[arg(long = "start", required = true)]
        starts: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classification counts of a simulated run, observed at the horizon.
    Counts {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        w0: f64,
        /// Calendar year of model year 0.
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        base_year: i32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class, per-filing-year tallies between two editions.
    Diff {
        #[command(flatten)]
        editions: EditionArgs,
        #[arg(long, value_parser = parse_level, default_value = "subclass")]
        level: ClassLevel,
        /// Keep only families filed in `A:B`.
        #[arg(long, value_parser = parse_years)]
        years: Option<(i32, i32)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Net reclassification rates per filing year from a diff table.
    Rates {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = parse_level, default_value = "subclass")]
        level: ClassLevel,
        #[arg(long, allow_negative_numbers = true)]
        window_start: i32,
        #[arg(long)]
        window: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Least-squares estimate of beta from an event table.
    FitBeta {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: u32,
        #[arg(long, value_enum, default_value_t = Convention::EventYear)]
        convention: Convention,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Triggering rate alpha (and W0) from a classification count table.
    EstimateAlpha {
        #[arg(long = "in")]
        input: PathBuf,
        /// Observation year of the counts used as present.
        #[arg(long, allow_negative_numbers = true)]
        present: i32,
        #[arg(long)]
        beta: f64,
        #[arg(long, allow_negative_numbers = true)]
        year: i32,
        #[arg(long, value_enum, default_value_t = CorrectionArg::Exact)]
        correction: CorrectionArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Growth factor from a `year,count` series by OLS on the logarithm.
    FitGrowth {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = parse_years)]
        years: Option<(i32, i32)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class, per-year counts of one edition.
    Panel {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = parse_level, default_value = "subclass")]
        level: ClassLevel,
        #[arg(long, value_parser = parse_years)]
        years: Option<(i32, i32)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class growth, classes per family and control columns.
    Groups {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = parse_level, default_value = "maingroup")]
        level: ClassLevel,
        #[arg(long, value_parser = parse_years)]
        years: (i32, i32),
        /// Three control years, comma separated; defaults to the last three of `--years`.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        recent: Option<Vec<i32>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Class size against added and removed classifications.
    Size {
        #[command(flatten)]
        editions: EditionArgs,
        #[arg(long, value_parser = parse_level, default_value = "subclass")]
        level: ClassLevel,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-section regressions of growth on classes per family.
    Regress {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = SpecArg::All)]
        spec: SpecArg,
        /// Drop groups with more classes per family than this.
        #[arg(long)]
        exclude_above: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Growth factor of one class between two years of a panel.
    ClassGrowth {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = parse_level, default_value = "subclass")]
        level: ClassLevel,
        #[arg(long)]
        class: String,
        #[arg(long, value_parser = parse_years)]
        years: (i32, i32),
        #[arg(long, value_parser = parse_growth_mode, default_value = "unique")]
        mode: GrowthMode,
    },
    /// Run the acceptance checks and print a pass/fail table.
    Validate {
        /// Comma-separated criterion ids; all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u8>>,
    },
    /// Synthetic inputs.
    Fixtures {
        #[command(subcommand)]
        command: FixtureCommand,
    },
}

#[derive(Debug, Args)]
struct EditionArgs {
    /// Path of the earlier edition, or its label when `--manifest` is given.
    #[arg(long)]
    earlier: String,
    #[arg(long)]
    later: String,
    /// TOML file mapping edition labels to snapshot paths.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum FixtureCommand {
    /// Write an edition pair, a manifest and the generating plan into a directory.
    Generate {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = FixtureKind::Editions)]
        kind: FixtureKind,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        families: usize,
        /// Model parameters for `--kind rates`.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, default_value_t = 30)]
        window_start: usize,
        #[arg(long, default_value_t = 1)]
        window: usize,
        #[arg(long, default_value_t = 1970)]
        base_year: i32,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Patents,
    Classifications,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Convention {
    EventYear,
    EditionYear,
}

impl From<Convention> for LagConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::EventYear => LagConvention::EventYear,
            Convention::EditionYear => LagConvention::EditionYear,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CorrectionArg {
    Exact,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SpecArg {
    All,
    ClassPerFamily,
    YearAveraged,
    Fractional,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FixtureKind {
    /// Random editions whose tallies are known from the plan.
    Editions,
    /// Classes gaining additions in proportion to their size.
    Proportional,
    /// Editions whose net rates follow a simulated run.
    Rates,
}

fn parse_level(s: &str) -> Result<ClassLevel, String> {
    s.parse()
        .map_err(|e: reclass_core::snapshots::SnapshotError| e.to_string())
}

fn parse_growth_mode(s: &str) -> Result<GrowthMode, String> {
    s.parse()
}

fn parse_years(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected A:B, got {s:?}"))?;
    let a: i32 = a.trim().parse().map_err(|_| format!("bad year {a:?}"))?;
    let b: i32 = b.trim().parse().map_err(|_| format!("bad year {b:?}"))?;
    if a > b {
        return Err(format!("empty range {a}:{b}"));
    }
    Ok((a, b))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                Kind::Validation.exit_code()
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(CliError { kind, message }) => {
            eprintln!("error: {message}");
            kind.exit_code()
        }
    }
}
