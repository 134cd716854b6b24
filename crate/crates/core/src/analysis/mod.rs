//! Per-class panels, growth and classifications-per-patent statistics, and
//! the cross-class regressions built on them.

pub mod ols;

use std::collections::{BTreeMap, BTreeSet};
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{fit_growth_ols, EstimationError};
use crate::simulator::CohortMatrix;
use crate::snapshots::{truncate_code, ClassLevel, EditionSnapshot, SnapshotError};

pub use ols::{ols, Coefficient, RegressionResult};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("class {class_id} has no patents in year {year}")]
    InactiveClass { class_id: String, year: i32 },
    #[error("class {0} has no patents")]
    NoPatents(String),
    #[error("control year {0} lies outside the fitted range")]
    ControlYearOutsideRange(i32),
    #[error("year range {0}..={1} is empty")]
    EmptyRange(i32, i32),
    #[error("column {column} is linearly dependent on earlier columns")]
    RankDeficient { column: String },
    #[error("{n} observations cannot identify {p} coefficients")]
    TooFewObservations { n: usize, p: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("non-finite value in regression input")]
    NonFinite,
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("simulation: {0}")]
    Simulation(String),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// One class in one filing year.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassYear {
    /// Distinct full codes inside the class.
    pub classifications: f64,
    /// Patents with at least one code in the class.
    pub unique: f64,
    /// Σ 1/m over those patents, m = the patent's number of classes.
    pub fractional: f64,
    /// Σ m over those patents: all classifications the class's patents carry.
    pub carried: f64,
}

impl ClassYear {
    fn absorb(&mut self, o: ClassYear) {
        self.classifications += o.classifications;
        self.unique += o.unique;
        self.fractional += o.fractional;
        self.carried += o.carried;
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassPanel {
    pub level: ClassLevel,
    pub classes: BTreeMap<String, BTreeMap<i32, ClassYear>>,
    /// Patents per filing year that hold at least one class at `level`.
    pub patents_by_year: BTreeMap<i32, f64>,
}

impl ClassPanel {
    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class(&self, class_id: &str) -> Result<&BTreeMap<i32, ClassYear>> {
        self.classes
            .get(class_id)
            .ok_or_else(|| AnalysisError::UnknownClass(class_id.to_string()))
    }

    pub fn cell(&self, class_id: &str, year: i32) -> ClassYear {
        self.classes
            .get(class_id)
            .and_then(|m| m.get(&year))
            .copied()
            .unwrap_or_default()
    }

    /// Single-class panel from a simulated run observed at model year
    /// `present`; cohort τ becomes filing year `base_year + τ`.
    pub fn from_matrix(class_id: &str, matrix: &CohortMatrix, present: usize, base_year: i32) -> Result<Self> {
        let profile = matrix
            .filing_year_profile(present)
            .map_err(|e| AnalysisError::Simulation(e.to_string()))?;
        let unique = matrix.unique_patents();
        let mut series = BTreeMap::new();
        let mut patents_by_year = BTreeMap::new();
        for (tau, &n) in profile.iter().enumerate() {
            let year = base_year + tau as i32;
            series.insert(
                year,
                ClassYear {
                    classifications: n,
                    unique: unique[tau],
                    fractional: unique[tau],
                    carried: n,
                },
            );
            patents_by_year.insert(year, unique[tau]);
        }
        Ok(Self {
            level: ClassLevel::Subclass,
            classes: BTreeMap::from([(class_id.to_string(), series)]),
            patents_by_year,
        })
    }

    /// Associative merge of panels built on disjoint family sets.
    pub fn merge(mut self, other: ClassPanel) -> ClassPanel {
        for (c, years) in other.classes {
            let mine = self.classes.entry(c).or_default();
            for (y, v) in years {
                mine.entry(y).or_default().absorb(v);
            }
        }
        for (y, n) in other.patents_by_year {
            *self.patents_by_year.entry(y).or_default() += n;
        }
        self
    }
}

/// Counts every family of `snapshot` filed within `years` (inclusive).
///
/// Codes without a part at `level` (a bare subclass at main-group level) are
/// skipped; families left with no class are not counted.
pub fn build_panel(snapshot: &EditionSnapshot, level: ClassLevel, years: Option<(i32, i32)>) -> ClassPanel {
    let mut panel = ClassPanel {
        level,
        ..ClassPanel::default()
    };
    for rec in snapshot.records.values() {
        if years.is_some_and(|(a, b)| rec.filing_year < a || rec.filing_year > b) {
            continue;
        }
        let mut by_class: BTreeMap<String, usize> = BTreeMap::new();
        for code in &rec.codes {
            if let Ok(c) = truncate_code(code, level) {
                *by_class.entry(c).or_default() += 1;
            }
        }
        if by_class.is_empty() {
            continue;
        }
        let m = by_class.len() as f64;
        *panel.patents_by_year.entry(rec.filing_year).or_default() += 1.0;
        for (c, codes) in by_class {
            panel
                .classes
                .entry(c)
                .or_default()
                .entry(rec.filing_year)
                .or_default()
                .absorb(ClassYear {
                    classifications: codes as f64,
                    unique: 1.0,
                    fractional: 1.0 / m,
                    carried: m,
                });
        }
    }
    panel
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GrowthMode {
    Classifications,
    #[default]
    Unique,
    Fractional,
}

impl std::str::FromStr for GrowthMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "classifications" => Ok(GrowthMode::Classifications),
            "unique" => Ok(GrowthMode::Unique),
            "fractional" => Ok(GrowthMode::Fractional),
            _ => Err(format!("unknown growth mode {s:?}")),
        }
    }
}

fn check_range(years: (i32, i32)) -> Result<()> {
    if years.0 > years.1 {
        return Err(AnalysisError::EmptyRange(years.0, years.1));
    }
    Ok(())
}

/// Growth factor of a class over `years`. The class must hold at least one
/// patent in every year of the range.
pub fn group_growth(panel: &ClassPanel, class_id: &str, years: (i32, i32), mode: GrowthMode) -> Result<f64> {
    check_range(years)?;
    let series = panel.class(class_id)?;
    let mut points = Vec::new();
    for y in years.0..=years.1 {
        let cell = series.get(&y).copied().unwrap_or_default();
        if cell.unique < 1.0 {
            return Err(AnalysisError::InactiveClass {
                class_id: class_id.to_string(),
                year: y,
            });
        }
        let v = match mode {
            GrowthMode::Classifications => cell.classifications,
            GrowthMode::Unique => cell.unique,
            GrowthMode::Fractional => cell.fractional,
        };
        points.push((y, v));
    }
    Ok(fit_growth_ols(&points, None)?.g_hat)
}

/// Classifications carried by the class's patents per unique patent.
pub fn class_per_family(panel: &ClassPanel, class_id: &str) -> Result<f64> {
    let series = panel.class(class_id)?;
    let carried: f64 = series.values().map(|c| c.carried).sum();
    let unique: f64 = series.values().map(|c| c.unique).sum();
    if unique <= 0.0 {
        return Err(AnalysisError::NoPatents(class_id.to_string()));
    }
    Ok(carried / unique)
}

/// Mean over filing years of that year's carried-per-unique ratio.
pub fn year_avg_class_per_family(panel: &ClassPanel, class_id: &str) -> Result<f64> {
    let ratios: Vec<f64> = panel
        .class(class_id)?
        .values()
        .filter(|c| c.unique > 0.0)
        .map(|c| c.carried / c.unique)
        .collect();
    if ratios.is_empty() {
        return Err(AnalysisError::NoPatents(class_id.to_string()));
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub class_id: String,
    pub g_k: f64,
    pub w_k: f64,
    pub w_k_year_avg: f64,
    pub g_k_fractional: f64,
    pub log_group_total: f64,
    pub log_group_total_fractional: f64,
    /// Log patent counts in the three control years.
    pub log_recent: [f64; 3],
}

impl GroupStats {
    pub fn section(&self) -> char {
        self.class_id.chars().next().unwrap_or('?')
    }

    pub fn subclass(&self) -> &str {
        &self.class_id[..self.class_id.len().min(4)]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupStatsTable {
    pub stats: Vec<GroupStats>,
    /// Classes failing the activity rule, with the first empty year.
    pub inactive: Vec<(String, i32)>,
}

/// Statistics for every class active in each year of `years`.
///
/// `recent_years` name the control-column years and must fall inside the range.
pub fn group_stats(panel: &ClassPanel, years: (i32, i32), recent_years: [i32; 3]) -> Result<GroupStatsTable> {
    check_range(years)?;
    if let Some(&y) = recent_years.iter().find(|&&y| y < years.0 || y > years.1) {
        return Err(AnalysisError::ControlYearOutsideRange(y));
    }
    let mut out = GroupStatsTable::default();
    for (class_id, series) in &panel.classes {
        let g_k = match group_growth(panel, class_id, years, GrowthMode::Unique) {
            Ok(g) => g,
            Err(AnalysisError::InactiveClass { year, .. }) => {
                out.inactive.push((class_id.clone(), year));
                continue;
            }
            Err(e) => return Err(e),
        };
        let g_k_fractional = group_growth(panel, class_id, years, GrowthMode::Fractional)?;
        let in_range = series.range(years.0..=years.1).map(|(_, c)| *c);
        let (unique, fractional) = in_range.fold((0.0, 0.0), |(u, f), c| (u + c.unique, f + c.fractional));
        out.stats.push(GroupStats {
            class_id: class_id.clone(),
            g_k,
            w_k: class_per_family(panel, class_id)?,
            w_k_year_avg: year_avg_class_per_family(panel, class_id)?,
            g_k_fractional,
            log_group_total: unique.ln(),
            log_group_total_fractional: fractional.ln(),
            log_recent: recent_years.map(|y| panel.cell(class_id, y).unique.ln()),
        });
    }
    Ok(out)
}

/// The three robustness regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteSpec {
    /// `g−1 ~ w_k + log total + three recent-year log counts`.
    ClassPerFamily,
    /// `g−1 ~ year-averaged w_k + log total`.
    YearAveraged,
    /// `g_frac−1 ~ w_k + log fractional total`.
    Fractional,
}

impl SuiteSpec {
    pub const ALL: [SuiteSpec; 3] = [
        SuiteSpec::ClassPerFamily,
        SuiteSpec::YearAveraged,
        SuiteSpec::Fractional,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SuiteSpec::ClassPerFamily => "class_per_family",
            SuiteSpec::YearAveraged => "year_averaged",
            SuiteSpec::Fractional => "fractional",
        }
    }

    /// Column name of the classifications-per-patent regressor.
    pub fn key_regressor(self) -> &'static str {
        match self {
            SuiteSpec::YearAveraged => "year_av_class_per_family",
            _ => "class_per_family",
        }
    }

    fn design(self, rows: &[&GroupStats]) -> (Vec<f64>, Vec<(&'static str, Vec<f64>)>) {
        let col = |f: &dyn Fn(&GroupStats) -> f64| rows.iter().map(|s| f(s)).collect::<Vec<f64>>();
        match self {
            SuiteSpec::ClassPerFamily => (
                col(&|s| s.g_k - 1.0),
                vec![
                    ("class_per_family", col(&|s| s.w_k)),
                    ("log_group_total", col(&|s| s.log_group_total)),
                    ("log_recent_1", col(&|s| s.log_recent[0])),
                    ("log_recent_2", col(&|s| s.log_recent[1])),
                    ("log_recent_3", col(&|s| s.log_recent[2])),
                ],
            ),
            SuiteSpec::YearAveraged => (
                col(&|s| s.g_k - 1.0),
                vec![
                    ("year_av_class_per_family", col(&|s| s.w_k_year_avg)),
                    ("log_group_total", col(&|s| s.log_group_total)),
                ],
            ),
            SuiteSpec::Fractional => (
                col(&|s| s.g_k_fractional - 1.0),
                vec![
                    ("class_per_family", col(&|s| s.w_k)),
                    ("log_group_total_fractional", col(&|s| s.log_group_total_fractional)),
                ],
            ),
        }
    }
}

/// Sections left out of the regressions; their codes still count toward w_k.
pub const EXCLUDED_SECTIONS: &[char] = &['Y'];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionResult {
    pub section: char,
    pub spec: SuiteSpec,
    pub result: RegressionResult,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteOutcome {
    pub results: Vec<SectionResult>,
    pub rejected: Vec<(char, AnalysisErrorKind)>,
}

/// Why a section could not be fitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnalysisErrorKind {
    TooFewGroups { n: usize, needed: usize },
    RankDeficient { column: String },
    Other(String),
}

/// Runs `spec` separately on each section, in parallel.
pub fn run_robustness_suite(stats: &[GroupStats], spec: SuiteSpec) -> SuiteOutcome {
    let mut by_section: BTreeMap<char, Vec<&GroupStats>> = BTreeMap::new();
    for s in stats {
        if !EXCLUDED_SECTIONS.contains(&s.section()) {
            by_section.entry(s.section()).or_default().push(s);
        }
    }
    let fits: Vec<(char, Result<RegressionResult>)> = thread::scope(|scope| {
        let handles: Vec<_> = by_section
            .into_iter()
            .map(|(sec, rows)| {
                scope.spawn(move || {
                    let (y, cols) = spec.design(&rows);
                    let cols: Vec<(&str, &[f64])> = cols.iter().map(|(n, c)| (*n, c.as_slice())).collect();
                    (sec, ols(&y, &cols, true))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("regression worker panicked"))
            .collect()
    });
    let mut out = SuiteOutcome::default();
    for (section, fit) in fits {
        match fit {
            Ok(result) => out.results.push(SectionResult { section, spec, result }),
            Err(AnalysisError::TooFewObservations { n, p }) => out
                .rejected
                .push((section, AnalysisErrorKind::TooFewGroups { n, needed: p + 1 })),
            Err(AnalysisError::RankDeficient { column }) => out
                .rejected
                .push((section, AnalysisErrorKind::RankDeficient { column })),
            Err(e) => out.rejected.push((section, AnalysisErrorKind::Other(e.to_string()))),
        }
    }
    out
}

/// Squared Pearson correlation.
pub fn pearson_r2(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(AnalysisError::TooFewObservations { n: x.len(), p: 2 });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok(sxy * sxy / (sxx * syy))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutlierFilter {
    pub kept: Vec<GroupStats>,
    pub removed: Vec<String>,
    /// Subclasses (first four characters) of the removed groups.
    pub touched_subclasses: BTreeSet<String>,
}

/// Drops groups with `w_k > threshold`.
pub fn exclude_outlier_subclasses(stats: &[GroupStats], threshold: f64) -> OutlierFilter {
    let mut out = OutlierFilter::default();
    for s in stats {
        if s.w_k > threshold {
            out.removed.push(s.class_id.clone());
            out.touched_subclasses.insert(s.subclass().to_string());
        } else {
            out.kept.push(s.clone());
        }
    }
    out
}
