//! File formats: CSV tables, JSON bundles, run manifests and atomic writes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{ClassPanel, GroupStats, SectionResult};
use crate::estimation::ClassificationCountTable;
use crate::simulator::{CohortMatrix, ReclassEventStream, ReclassRecord};
use crate::snapshots::{ClassLevel, DiffResult, SizeRow, Tally};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid table: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, IoError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| IoError::Invalid(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let res = (|| {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

pub fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| IoError::Invalid(e.to_string()))
}

/// Like [`to_csv`] but still emits the header for an empty table.
fn to_csv_with_header<T: Serialize>(header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| IoError::Invalid(e.to_string()))
}

pub fn from_csv<T: DeserializeOwned, R: Read>(reader: R) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(IoError::from)).collect()
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

// ---------------------------------------------------------------------------
// Cohort matrix
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub tau: usize,
    pub t: usize,
    pub count: f64,
}

pub const COHORT_HEADER: &[&str] = &["tau", "t", "count"];

pub fn cohort_matrix_csv(m: &CohortMatrix) -> Result<Vec<u8>> {
    to_csv_with_header(
        COHORT_HEADER,
        m.cells().map(|(tau, t, count)| CohortRow { tau, t, count }),
    )
}

/// Totals per observation year from a cohort CSV.
pub fn totals_from_cohort_csv<R: Read>(reader: R) -> Result<Vec<f64>> {
    let rows: Vec<CohortRow> = from_csv(reader)?;
    let mut totals: Vec<f64> = Vec::new();
    for r in rows {
        if r.tau > r.t {
            return Err(IoError::Invalid(format!("tau {} after t {}", r.tau, r.t)));
        }
        if totals.len() <= r.t {
            totals.resize(r.t + 1, 0.0);
        }
        totals[r.t] += r.count;
    }
    Ok(totals)
}

// ---------------------------------------------------------------------------
// Reclassification event streams
// ---------------------------------------------------------------------------

pub const EVENT_HEADER: &[&str] = &[
    "filing_year",
    "window_start",
    "event_year",
    "reclassified",
    "classifications_before",
];

pub fn event_stream_csv(s: &ReclassEventStream) -> Result<Vec<u8>> {
    to_csv_with_header(EVENT_HEADER, &s.records)
}

pub fn read_event_stream<R: Read>(reader: R) -> Result<ReclassEventStream> {
    Ok(ReclassEventStream {
        records: from_csv::<ReclassRecord, _>(reader)?,
    })
}

// ---------------------------------------------------------------------------
// Classification count tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub filing_year: i32,
    pub observation_year: i32,
    pub classifications: f64,
    pub unique_families: Option<f64>,
}

/// Count table CSV; `unique_families` is repeated on each row of its filing year.
pub fn count_table_csv(t: &ClassificationCountTable) -> Result<Vec<u8>> {
    to_csv_with_header(
        &["filing_year", "observation_year", "classifications", "unique_families"],
        t.entries()
            .map(|(filing_year, observation_year, classifications)| CountRow {
                filing_year,
                observation_year,
                classifications,
                unique_families: t.unique_families(filing_year),
            }),
    )
}

pub fn read_count_table<R: Read>(reader: R, present_year: i32) -> Result<ClassificationCountTable> {
    let mut table = ClassificationCountTable::new(present_year);
    let mut families: BTreeMap<i32, f64> = BTreeMap::new();
    for r in from_csv::<CountRow, _>(reader)? {
        table
            .insert(r.filing_year, r.observation_year, r.classifications)
            .map_err(|e| IoError::Invalid(e.to_string()))?;
        if let Some(u) = r.unique_families {
            if families.insert(r.filing_year, u).is_some_and(|prev| prev != u) {
                return Err(IoError::Invalid(format!(
                    "conflicting unique_families for filing year {}",
                    r.filing_year
                )));
            }
        }
    }
    for (y, u) in families {
        table
            .set_unique_families(y, u)
            .map_err(|e| IoError::Invalid(e.to_string()))?;
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Diffs, panels, size tables, group statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffRow {
    pub class_id: String,
    pub filing_year: i32,
    pub positive: u64,
    pub negative: u64,
    pub baseline: u64,
}

pub const DIFF_HEADER: &[&str] = &["class_id", "filing_year", "positive", "negative", "baseline"];

pub fn diff_csv(d: &DiffResult) -> Result<Vec<u8>> {
    to_csv_with_header(
        DIFF_HEADER,
        d.entries.iter().map(|((class_id, filing_year), t)| DiffRow {
            class_id: class_id.clone(),
            filing_year: *filing_year,
            positive: t.positive,
            negative: t.negative,
            baseline: t.baseline,
        }),
    )
}

pub fn read_diff<R: Read>(reader: R, level: ClassLevel) -> Result<DiffResult> {
    let mut out = DiffResult {
        level,
        entries: BTreeMap::new(),
    };
    for r in from_csv::<DiffRow, _>(reader)? {
        let key = (r.class_id, r.filing_year);
        if out.entries.contains_key(&key) {
            return Err(IoError::Invalid(format!("duplicate row {} {}", key.0, key.1)));
        }
        out.entries.insert(
            key,
            Tally {
                positive: r.positive,
                negative: r.negative,
                baseline: r.baseline,
            },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub class_id: String,
    pub filing_year: i32,
    pub classifications: f64,
    pub unique: f64,
    pub fractional: f64,
    pub carried: f64,
}

pub fn panel_csv(p: &ClassPanel) -> Result<Vec<u8>> {
    let rows = p.classes.iter().flat_map(|(class_id, years)| {
        years.iter().map(move |(y, c)| PanelRow {
            class_id: class_id.clone(),
            filing_year: *y,
            classifications: c.classifications,
            unique: c.unique,
            fractional: c.fractional,
            carried: c.carried,
        })
    });
    to_csv_with_header(
        &[
            "class_id",
            "filing_year",
            "classifications",
            "unique",
            "fractional",
            "carried",
        ],
        rows,
    )
}

pub fn size_table_csv(rows: &[SizeRow]) -> Result<Vec<u8>> {
    to_csv_with_header(&["class_id", "size", "positive", "negative"], rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStatsRow {
    pub class_id: String,
    pub g_k: f64,
    pub w_k: f64,
    pub w_k_year_avg: f64,
    pub g_k_fractional: f64,
    pub log_group_total: f64,
    pub log_group_total_fractional: f64,
    pub log_recent_1: f64,
    pub log_recent_2: f64,
    pub log_recent_3: f64,
}

pub const GROUP_STATS_HEADER: &[&str] = &[
    "class_id",
    "g_k",
    "w_k",
    "w_k_year_avg",
    "g_k_fractional",
    "log_group_total",
    "log_group_total_fractional",
    "log_recent_1",
    "log_recent_2",
    "log_recent_3",
];

pub fn group_stats_csv(stats: &[GroupStats]) -> Result<Vec<u8>> {
    to_csv_with_header(
        GROUP_STATS_HEADER,
        stats.iter().map(|s| GroupStatsRow {
            class_id: s.class_id.clone(),
            g_k: s.g_k,
            w_k: s.w_k,
            w_k_year_avg: s.w_k_year_avg,
            g_k_fractional: s.g_k_fractional,
            log_group_total: s.log_group_total,
            log_group_total_fractional: s.log_group_total_fractional,
            log_recent_1: s.log_recent[0],
            log_recent_2: s.log_recent[1],
            log_recent_3: s.log_recent[2],
        }),
    )
}

pub fn read_group_stats<R: Read>(reader: R) -> Result<Vec<GroupStats>> {
    Ok(from_csv::<GroupStatsRow, _>(reader)?
        .into_iter()
        .map(|r| GroupStats {
            class_id: r.class_id,
            g_k: r.g_k,
            w_k: r.w_k,
            w_k_year_avg: r.w_k_year_avg,
            g_k_fractional: r.g_k_fractional,
            log_group_total: r.log_group_total,
            log_group_total_fractional: r.log_group_total_fractional,
            log_recent: [r.log_recent_1, r.log_recent_2, r.log_recent_3],
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Regression reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: Option<f64>,
    pub p_value: Option<f64>,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionReport {
    pub section: String,
    pub spec: String,
    pub coefficients: Vec<CoefficientReport>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub residual_std_error: f64,
    pub f_statistic: Option<f64>,
    pub f_p_value: Option<f64>,
    pub n_obs: usize,
    pub df_residual: usize,
}

impl From<&SectionResult> for SectionReport {
    fn from(s: &SectionResult) -> Self {
        let r = &s.result;
        Self {
            section: s.section.to_string(),
            spec: s.spec.label().to_string(),
            coefficients: r
                .coefficients
                .iter()
                .map(|c| CoefficientReport {
                    name: c.name.clone(),
                    estimate: c.estimate,
                    std_error: c.std_error,
                    t_value: c.t_value,
                    p_value: c.p_value,
                    stars: c.stars().to_string(),
                })
                .collect(),
            r_squared: r.r_squared,
            adj_r_squared: r.adj_r_squared,
            residual_std_error: r.residual_std_error,
            f_statistic: r.f_statistic,
            f_p_value: r.f_p_value,
            n_obs: r.n_obs,
            df_residual: r.df_residual,
        }
    }
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub inputs: Vec<PathBuf>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            inputs: Vec::new(),
            parameters: BTreeMap::new(),
            seed: None,
            outputs: Vec::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.parameters.insert(key.to_string(), v);
        self
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    /// Sidecar location for an output file: `<file>.manifest.json`.
    pub fn sidecar_path(output: &Path) -> PathBuf {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        output.with_file_name(name)
    }
}

/// Writes every `(path, bytes)` output atomically, then one sidecar manifest
/// per output. On failure, outputs already written are removed.
pub fn write_outputs(manifest: &RunManifest, outputs: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    let mut m = manifest.clone();
    m.outputs = outputs.iter().map(|(p, _)| p.clone()).collect();
    let sidecar = to_json_pretty(&m)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let mut run = || -> Result<()> {
        for (path, bytes) in outputs {
            atomic_write(path, bytes)?;
            written.push(path.clone());
            let side = RunManifest::sidecar_path(path);
            atomic_write(&side, &sidecar)?;
            written.push(side);
        }
        Ok(())
    };
    let res = run();
    if res.is_err() {
        for p in written {
            let _ = fs::remove_file(p);
        }
    }
    res
}
