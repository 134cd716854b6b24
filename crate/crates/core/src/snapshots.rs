//! Classification snapshots of patent families and the reclassifications
//! between two editions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::{ReclassEventStream, ReclassRecord};

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed classification code {0:?}")]
    MalformedCode(String),
    #[error("code {0:?} has no main-group part")]
    NoMainGroup(String),
    #[error("unknown classification level {0:?}")]
    UnknownLevel(String),
    #[error("manifest: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, SnapshotError>;

/// Granularity at which codes are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassLevel {
    /// First character, e.g. `H`.
    Section,
    /// First four characters, e.g. `H01L`.
    #[default]
    Subclass,
    /// Subclass plus main-group number, e.g. `H01L21`.
    MainGroup,
}

impl FromStr for ClassLevel {
    type Err = SnapshotError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "section" => Ok(ClassLevel::Section),
            "subclass" => Ok(ClassLevel::Subclass),
            "maingroup" | "main_group" | "main-group" | "group" => Ok(ClassLevel::MainGroup),
            _ => Err(SnapshotError::UnknownLevel(s.to_string())),
        }
    }
}

impl fmt::Display for ClassLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassLevel::Section => "section",
            ClassLevel::Subclass => "subclass",
            ClassLevel::MainGroup => "maingroup",
        })
    }
}

/// Normalizes a code (uppercase, no whitespace) and checks its lexical shape:
/// letter, two digits, letter, then optionally `digits` or `digits/digits`.
pub fn normalize_code(code: &str) -> Result<String> {
    let c: String = code
        .chars()
        .filter(|ch| !ch.is_whitespace())
        .collect::<String>()
        .to_ascii_uppercase();
    let b = c.as_bytes();
    let head_ok = b.len() >= 4
        && b[0].is_ascii_alphabetic()
        && b[1].is_ascii_digit()
        && b[2].is_ascii_digit()
        && b[3].is_ascii_alphabetic();
    if !head_ok {
        return Err(SnapshotError::MalformedCode(code.to_string()));
    }
    let rest = &c[4..];
    if !rest.is_empty() {
        let (main, sub) = match rest.split_once('/') {
            Some((m, s)) => (m, Some(s)),
            None => (rest, None),
        };
        let digits = |s: &str| !s.is_empty() && s.bytes().all(|x| x.is_ascii_digit());
        if !digits(main) || sub.is_some_and(|s| !digits(s)) {
            return Err(SnapshotError::MalformedCode(code.to_string()));
        }
    }
    Ok(c)
}

/// Class identifier of `code` at `level`.
pub fn truncate_code(code: &str, level: ClassLevel) -> Result<String> {
    let c = normalize_code(code)?;
    Ok(match level {
        ClassLevel::Section => c[..1].to_string(),
        ClassLevel::Subclass => c[..4].to_string(),
        ClassLevel::MainGroup => {
            let main = c.split('/').next().unwrap_or(&c);
            if main.len() == 4 {
                return Err(SnapshotError::NoMainGroup(code.to_string()));
            }
            main.to_string()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyRecord {
    pub filing_year: i32,
    pub codes: BTreeSet<String>,
}

impl FamilyRecord {
    /// Distinct class ids of this family at `level`.
    pub fn classes(&self, level: ClassLevel) -> Result<BTreeSet<String>> {
        self.codes.iter().map(|c| truncate_code(c, level)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditionSnapshot {
    pub label: String,
    pub records: BTreeMap<String, FamilyRecord>,
}

impl EditionSnapshot {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            records: BTreeMap::new(),
        }
    }

    /// Adds codes to a family, creating it if needed. Keeps the earliest filing year.
    pub fn add<I, S>(&mut self, family_id: &str, filing_year: i32, codes: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let codes = codes
            .into_iter()
            .map(|c| normalize_code(c.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let rec = self
            .records
            .entry(family_id.to_string())
            .or_insert_with(|| FamilyRecord {
                filing_year,
                codes: BTreeSet::new(),
            });
        rec.filing_year = rec.filing_year.min(filing_year);
        rec.codes.extend(codes);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Row filter applied while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SnapshotFilter {
    pub min_year: Option<i32>,
    pub max_year: Option<i32>,
    pub allow_empty_codes: bool,
    /// Drop rows whose `multi_jurisdiction` column is false. Rows without the
    /// column pass: the jurisdiction rule is applied during extraction.
    pub require_multi_jurisdiction: bool,
}

impl SnapshotFilter {
    pub fn years(min: i32, max: i32) -> Self {
        Self {
            min_year: Some(min),
            max_year: Some(max),
            ..Self::default()
        }
    }

    fn admits_year(&self, y: i32) -> bool {
        self.min_year.is_none_or(|m| y >= m) && self.max_year.is_none_or(|m| y <= m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowDiagnostic {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoadReport {
    pub rows_read: usize,
    pub duplicates_merged: usize,
    pub filtered_out: usize,
    pub rejected: Vec<RowDiagnostic>,
}

#[derive(Debug, Deserialize)]
struct SnapshotRow {
    family_id: String,
    filing_year: Option<String>,
    #[serde(default)]
    codes: Option<String>,
    #[serde(default)]
    multi_jurisdiction: Option<String>,
}

/// Reads a snapshot CSV (`family_id,filing_year,codes[,multi_jurisdiction]`,
/// codes separated by `;`). Bad rows are skipped and reported, not fatal.
pub fn read_snapshot<R: Read>(
    reader: R,
    label: &str,
    filter: &SnapshotFilter,
) -> Result<(EditionSnapshot, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut snap = EditionSnapshot::new(label);
    let mut report = LoadReport::default();
    for (i, row) in rdr.deserialize::<SnapshotRow>().enumerate() {
        let line = i as u64 + 2;
        report.rows_read += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.rejected.push(RowDiagnostic {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let reject = |report: &mut LoadReport, message: String| report.rejected.push(RowDiagnostic { line, message });
        let year = match row.filing_year.as_deref().map(str::parse::<i32>) {
            Some(Ok(y)) => y,
            Some(Err(_)) | None => {
                reject(
                    &mut report,
                    format!("family {}: missing or invalid filing year", row.family_id),
                );
                continue;
            }
        };
        if row.family_id.is_empty() {
            reject(&mut report, "empty family id".into());
            continue;
        }
        if !filter.admits_year(year)
            || (filter.require_multi_jurisdiction
                && row
                    .multi_jurisdiction
                    .as_deref()
                    .is_some_and(|v| matches!(v, "0" | "false" | "no" | "FALSE")))
        {
            report.filtered_out += 1;
            continue;
        }
        let codes: Vec<&str> = row
            .codes
            .as_deref()
            .unwrap_or("")
            .split(';')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .collect();
        if codes.is_empty() && !filter.allow_empty_codes {
            reject(
                &mut report,
                format!("family {}: no classification codes", row.family_id),
            );
            continue;
        }
        if let Some(bad) = codes.iter().find(|c| normalize_code(c).is_err()) {
            reject(&mut report, format!("family {}: malformed code {bad:?}", row.family_id));
            continue;
        }
        if snap.records.contains_key(&row.family_id) {
            report.duplicates_merged += 1;
        }
        snap.add(&row.family_id, year, codes)?;
    }
    Ok((snap, report))
}

pub fn load_snapshot(path: &Path, label: &str, filter: &SnapshotFilter) -> Result<(EditionSnapshot, LoadReport)> {
    let file = File::open(path).map_err(|source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_snapshot(file, label, filter)
}

pub fn write_snapshot<W: std::io::Write>(snap: &EditionSnapshot, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["family_id", "filing_year", "codes"])?;
    for (id, rec) in &snap.records {
        let codes = rec.codes.iter().cloned().collect::<Vec<_>>().join(";");
        w.write_record([id.as_str(), &rec.filing_year.to_string(), &codes])?;
    }
    w.flush().map_err(|e| SnapshotError::Csv(e.into()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// Edition label → snapshot path, stored as `label = "path"` lines.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub editions: BTreeMap<String, PathBuf>,
}

impl Manifest {
    /// Parses a manifest; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let table: BTreeMap<String, String> =
            toml::from_str(text).map_err(|e| SnapshotError::Manifest(e.to_string()))?;
        let editions = table
            .into_iter()
            .map(|(k, v)| {
                let p = PathBuf::from(v);
                let p = if p.is_absolute() { p } else { base_dir.join(p) };
                (k, p)
            })
            .collect();
        Ok(Self { editions })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| SnapshotError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn render(&self) -> String {
        let table: BTreeMap<&str, String> = self
            .editions
            .iter()
            .map(|(k, v)| (k.as_str(), v.to_string_lossy().into_owned()))
            .collect();
        toml::to_string(&table).expect("string table always serializes")
    }

    pub fn path(&self, label: &str) -> Result<&Path> {
        self.editions
            .get(label)
            .map(PathBuf::as_path)
            .ok_or_else(|| SnapshotError::Manifest(format!("no edition labelled {label:?}")))
    }
}

// ---------------------------------------------------------------------------
// Diffing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub positive: u64,
    pub negative: u64,
    pub baseline: u64,
}

impl Tally {
    fn absorb(&mut self, other: Tally) {
        self.positive += other.positive;
        self.negative += other.negative;
        self.baseline += other.baseline;
    }
}

/// Additions, removals and earlier-edition counts per `(class_id, filing_year)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DiffResult {
    pub level: ClassLevel,
    pub entries: BTreeMap<(String, i32), Tally>,
}

impl DiffResult {
    /// Associative, order-independent merge of partial diffs.
    pub fn merge(mut self, other: DiffResult) -> DiffResult {
        for (k, t) in other.entries {
            self.entries.entry(k).or_default().absorb(t);
        }
        self
    }

    pub fn totals(&self) -> Tally {
        let mut t = Tally::default();
        for v in self.entries.values() {
            t.absorb(*v);
        }
        t
    }
}

/// Reclassifications of the families present in both editions.
///
/// Codes are truncated to `level` and deduplicated per family; a class gained
/// counts as one positive, a class lost as one negative. The baseline counts
/// the family's classes in the earlier edition.
pub fn diff(earlier: &EditionSnapshot, later: &EditionSnapshot, level: ClassLevel) -> Result<DiffResult> {
    diff_families(earlier, later, level, earlier.records.keys())
}

fn diff_families<'a>(
    earlier: &EditionSnapshot,
    later: &EditionSnapshot,
    level: ClassLevel,
    ids: impl Iterator<Item = &'a String>,
) -> Result<DiffResult> {
    let mut out = DiffResult {
        level,
        entries: BTreeMap::new(),
    };
    for id in ids {
        let (Some(a), Some(b)) = (earlier.records.get(id), later.records.get(id)) else {
            continue;
        };
        let year = a.filing_year;
        let before = a.classes(level)?;
        let after = b.classes(level)?;
        for c in &before {
            let t = out.entries.entry((c.clone(), year)).or_default();
            t.baseline += 1;
            if !after.contains(c) {
                t.negative += 1;
            }
        }
        for c in after.difference(&before) {
            out.entries.entry((c.clone(), year)).or_default().positive += 1;
        }
    }
    Ok(out)
}

/// Same result as [`diff`], computed over `parts` family-id partitions on
/// scoped threads and merged.
pub fn diff_partitioned(
    earlier: &EditionSnapshot,
    later: &EditionSnapshot,
    level: ClassLevel,
    parts: usize,
) -> Result<DiffResult> {
    let ids: Vec<&String> = earlier.records.keys().collect();
    let chunk = ids.len().div_ceil(parts.max(1)).max(1);
    let partials: Vec<Result<DiffResult>> = thread::scope(|s| {
        let handles: Vec<_> = ids
            .chunks(chunk)
            .map(|c| s.spawn(move || diff_families(earlier, later, level, c.iter().copied())))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("diff worker panicked"))
            .collect()
    });
    partials.into_iter().try_fold(
        DiffResult {
            level,
            entries: BTreeMap::new(),
        },
        |acc, p| Ok(acc.merge(p?)),
    )
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetRates {
    pub stream: ReclassEventStream,
    /// Filing years left out because their baseline is zero.
    pub skipped: Vec<i32>,
}

/// Net reclassifications per earlier-edition classification, per filing year.
///
/// Every filing year becomes one aggregate record for the window starting at
/// `window_start` and spanning `window_len` event years.
pub fn net_rates_by_filing_year(diff: &DiffResult, window_start: i32, window_len: u32) -> NetRates {
    let mut per_year: BTreeMap<i32, (i64, u64)> = BTreeMap::new();
    for ((_, year), t) in &diff.entries {
        let e = per_year.entry(*year).or_default();
        e.0 += t.positive as i64 - t.negative as i64;
        e.1 += t.baseline;
    }
    let mut out = NetRates::default();
    for (year, (net, baseline)) in per_year {
        if baseline == 0 {
            out.skipped.push(year);
            continue;
        }
        out.stream.records.push(ReclassRecord {
            filing_year: year,
            window_start,
            event_year: window_start + window_len as i32,
            reclassified: net as f64,
            classifications_before: baseline as f64,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeRow {
    pub class_id: String,
    pub size: u64,
    pub positive: u64,
    pub negative: u64,
}

/// Class size (distinct families in the earlier edition) against the class's
/// total positive and negative reclassifications.
pub fn reclass_vs_size(diff: &DiffResult, earlier: &EditionSnapshot) -> Result<Vec<SizeRow>> {
    let mut rows: BTreeMap<String, SizeRow> = BTreeMap::new();
    let blank = |id: &str| SizeRow {
        class_id: id.to_string(),
        size: 0,
        positive: 0,
        negative: 0,
    };
    for rec in earlier.records.values() {
        for c in rec.classes(diff.level)? {
            rows.entry(c.clone()).or_insert_with(|| blank(&c)).size += 1;
        }
    }
    for ((c, _), t) in &diff.entries {
        let r = rows.entry(c.clone()).or_insert_with(|| blank(c));
        r.positive += t.positive;
        r.negative += t.negative;
    }
    Ok(rows.into_values().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Best `log10` offset with the slope pinned to 1 (mean log ratio).
    pub unit_slope_offset: f64,
    pub n_points: usize,
}

impl LogLogFit {
    /// `10^offset`: the proportionality constant of a slope-1 relation.
    pub fn proportionality(&self) -> f64 {
        10f64.powf(self.unit_slope_offset)
    }
}

/// `log10(count)` on `log10(size)` over rows where both are positive.
pub fn log_log_fit(rows: &[SizeRow], positive: bool) -> Option<LogLogFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.size, if positive { r.positive } else { r.negative }))
        .filter(|&(s, c)| s > 0 && c > 0)
        .map(|(s, c)| ((s as f64).log10(), (c as f64).log10()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(LogLogFit {
        slope,
        intercept: my - slope * mx,
        r2,
        unit_slope_offset: my - mx,
        n_points: pts.len(),
    })
}
