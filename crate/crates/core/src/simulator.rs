//! Forward iteration of the cohort dynamics.
//!
//! The simulator is deliberately naive: it applies the recurrence cell by cell
//! and never touches the closed forms in [`crate::model`], so the two can be
//! checked against each other.

use std::collections::BTreeMap;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelParams;

/// Largest horizon the triangular store accepts.
pub const MAX_HORIZON: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("horizon {0} exceeds the supported maximum of {MAX_HORIZON}")]
    HorizonTooLarge(usize),
    #[error("initial cohort ({tau}, {count}) is invalid: counts must be positive and tau within the horizon")]
    BadInitialCohort { tau: usize, count: f64 },
    #[error("classification mode needs a positive w0")]
    MissingW0,
    #[error("cell overflow at t = {t}")]
    Overflow { t: usize },
    #[error("time {t} is beyond the horizon {horizon}")]
    BeyondHorizon { t: usize, horizon: usize },
    #[error("window starting at {start} with {len} event years does not fit in horizon {horizon}")]
    WindowOutOfRange { start: usize, len: usize, horizon: usize },
    #[error("empty profile")]
    EmptyProfile,
    #[error("reclassified total is defined for t >= 1")]
    NeedPositiveTime,
}

pub type Result<T> = std::result::Result<T, SimError>;

/// What a cell counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    #[default]
    Patents,
    /// Cells count classifications; each new patent arrives with `w0` of them.
    Classifications,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub params: ModelParams,
    pub horizon: usize,
    /// `(τ, count)` pairs added to `n_τ(τ)` when cohort `τ` opens.
    pub initial_cohorts: Vec<(usize, f64)>,
    pub mode: CountMode,
    pub w0: Option<f64>,
}

impl SimulationConfig {
    /// The canonical start: a single unit cohort at `τ = 0`.
    pub fn canonical(params: ModelParams, horizon: usize) -> Self {
        Self {
            params,
            horizon,
            initial_cohorts: vec![(0, 1.0)],
            mode: CountMode::Patents,
            w0: None,
        }
    }

    pub fn with_classifications(mut self, w0: f64) -> Self {
        self.mode = CountMode::Classifications;
        self.w0 = Some(w0);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.horizon > MAX_HORIZON {
            return Err(SimError::HorizonTooLarge(self.horizon));
        }
        for &(tau, count) in &self.initial_cohorts {
            if !(count > 0.0 && count.is_finite()) || tau > self.horizon {
                return Err(SimError::BadInitialCohort { tau, count });
            }
        }
        if self.mode == CountMode::Classifications && !self.w0.is_some_and(|w| w > 0.0) {
            return Err(SimError::MissingW0);
        }
        Ok(())
    }
}

/// Triangular table of `n_τ(t)` for `0 ≤ τ ≤ t ≤ horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortMatrix {
    params: ModelParams,
    mode: CountMode,
    w0: Option<f64>,
    rows: Vec<Vec<f64>>,
}

/// Advances one row: every cohort `τ ≤ t` grows by `β n_τ(t)/(t−τ+1)` and a new
/// cohort of size `α n(t)` opens.
pub fn step(row: &[f64], params: ModelParams) -> Vec<f64> {
    let t = row.len() - 1;
    let total: f64 = row.iter().sum();
    let mut next = Vec::with_capacity(row.len() + 1);
    next.extend(
        row.iter()
            .enumerate()
            .map(|(tau, &n)| n + params.beta * n / (t - tau + 1) as f64),
    );
    next.push(params.alpha * total);
    next
}

/// Iterates the dynamics from the configured initial cohorts.
pub fn run(config: &SimulationConfig) -> Result<CohortMatrix> {
    config.validate()?;
    let mut injections: BTreeMap<usize, f64> = BTreeMap::new();
    for &(tau, count) in &config.initial_cohorts {
        *injections.entry(tau).or_insert(0.0) += count;
    }
    let mut rows = Vec::with_capacity(config.horizon + 1);
    rows.push(vec![injections.get(&0).copied().unwrap_or(0.0)]);
    for t in 0..config.horizon {
        let mut next = step(&rows[t], config.params);
        if let Some(extra) = injections.get(&(t + 1)) {
            next[t + 1] += extra;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Overflow { t: t + 1 });
        }
        rows.push(next);
    }
    Ok(CohortMatrix {
        params: config.params,
        mode: config.mode,
        w0: config.w0,
        rows,
    })
}

/// Runs independent simulations on scoped threads and collects them by key.
pub fn sweep<K: Ord + Clone + Send + Sync>(configs: &[(K, SimulationConfig)]) -> BTreeMap<K, Result<CohortMatrix>> {
    thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|(k, c)| (k.clone(), s.spawn(move || run(c))))
            .collect();
        handles
            .into_iter()
            .map(|(k, h)| (k, h.join().expect("simulation thread panicked")))
            .collect()
    })
}

impl CohortMatrix {
    pub fn horizon(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn mode(&self) -> CountMode {
        self.mode
    }

    /// `n_τ(t)`, zero for `τ > t`.
    pub fn cell(&self, tau: usize, t: usize) -> f64 {
        self.rows.get(t).and_then(|row| row.get(tau)).copied().unwrap_or(0.0)
    }

    pub fn row(&self, t: usize) -> Option<&[f64]> {
        self.rows.get(t).map(Vec::as_slice)
    }

    /// `n(t)`.
    pub fn total(&self, t: usize) -> f64 {
        self.rows.get(t).map_or(0.0, |r| r.iter().sum())
    }

    pub fn totals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().sum()).collect()
    }

    /// Iterates `(τ, t, n_τ(t))` in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(t, row)| row.iter().enumerate().map(move |(tau, &n)| (tau, t, n)))
    }

    /// Sum of the reclassification increments applied in the step from `t`:
    /// `Σ_{τ≤t} β n_τ(t)/(t−τ+1)`.
    pub fn reclassified_total(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(SimError::NeedPositiveTime);
        }
        let row = self.filing_year_profile(t)?;
        Ok(row
            .iter()
            .enumerate()
            .map(|(tau, &n)| self.params.beta * n / (t - tau + 1) as f64)
            .sum())
    }

    /// The row `τ ↦ n_τ(t)`.
    pub fn filing_year_profile(&self, t: usize) -> Result<&[f64]> {
        self.row(t).ok_or(SimError::BeyondHorizon {
            t,
            horizon: self.horizon(),
        })
    }

    /// Peak filing year of row `t`, ignoring the seed cohort `τ = 0`.
    ///
    /// The seed cohort always outweighs cohort 1 (which starts at `α < 1`), so
    /// the peak is searched over `1 ≤ τ ≤ t`.
    pub fn peak_filing_year(&self, t: usize) -> Result<usize> {
        let row = self.filing_year_profile(t)?;
        if row.len() < 2 {
            return Ok(0);
        }
        Ok(1 + peak_year(&row[1..])?)
    }

    /// Unique patents per cohort (`n_τ(τ)/w0`); only meaningful in
    /// classification mode, equals `n_τ(τ)` in patent mode.
    pub fn unique_patents(&self) -> Vec<f64> {
        let w0 = match self.mode {
            CountMode::Patents => 1.0,
            CountMode::Classifications => self.w0.unwrap_or(1.0),
        };
        self.rows.iter().enumerate().map(|(tau, row)| row[tau] / w0).collect()
    }

    /// `n(t) / Σ_{τ≤t} n_τ(τ)/w0`: classifications carried per unique patent.
    pub fn class_per_patent_at(&self, t: usize) -> Result<f64> {
        let n = self.filing_year_profile(t)?.iter().sum::<f64>();
        let unique: f64 = self.unique_patents()[..=t].iter().sum();
        Ok(n / unique)
    }

    /// Per-year reclassification records for every window and every filing year
    /// that exists before the window opens.
    ///
    /// A window starting at `s` with `len` event years covers the increments
    /// landing in `t = s+1, …, s+len`; the increment landing in `t` is
    /// `β n_τ(t−1)/(t−τ)` and its denominator is `n_τ(t−1)`.
    pub fn emit_reclass_events(&self, windows: &[Window]) -> Result<ReclassEventStream> {
        let mut records = Vec::new();
        for w in windows {
            if w.len == 0 || w.start + w.len > self.horizon() {
                return Err(SimError::WindowOutOfRange {
                    start: w.start,
                    len: w.len,
                    horizon: self.horizon(),
                });
            }
            for tau in 0..=w.start {
                if self.cell(tau, w.start) <= 0.0 {
                    continue;
                }
                for t in w.start + 1..=w.start + w.len {
                    let before = self.cell(tau, t - 1);
                    records.push(ReclassRecord {
                        filing_year: tau as i32,
                        window_start: w.start as i32,
                        event_year: t as i32,
                        reclassified: self.params.beta * before / (t - tau) as f64,
                        classifications_before: before,
                    });
                }
            }
        }
        Ok(ReclassEventStream { records })
    }
}

/// Earliest index `i` with `p[i] ≥ p[i+1]`; the last index when `p` is
/// strictly increasing.
pub fn peak_year(profile: &[f64]) -> Result<usize> {
    if profile.is_empty() {
        return Err(SimError::EmptyProfile);
    }
    Ok(profile
        .windows(2)
        .position(|w| w[0] >= w[1])
        .unwrap_or(profile.len() - 1))
}

/// A reclassification moment in model time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub len: usize,
}

impl Window {
    pub fn new(start: usize, len: usize) -> Self {
        Self { start, len }
    }
}

/// One observation of net reclassifications for a filing-year cohort.
///
/// Records sharing `(filing_year, window_start)` belong to one window sample.
/// `event_year` is the year the reclassification lands; snapshot diffs, which
/// only see the window total, put the window's last year there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReclassRecord {
    pub filing_year: i32,
    pub window_start: i32,
    pub event_year: i32,
    pub reclassified: f64,
    pub classifications_before: f64,
}

impl ReclassRecord {
    pub fn rate(&self) -> f64 {
        self.reclassified / self.classifications_before
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReclassEventStream {
    pub records: Vec<ReclassRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model;
    use approx::assert_relative_eq;

    fn params(alpha: f64, beta: f64) -> ModelParams {
        ModelParams::dynamics(alpha, beta).unwrap()
    }

    fn canonical(alpha: f64, beta: f64, horizon: usize) -> CohortMatrix {
        run(&SimulationConfig::canonical(params(alpha, beta), horizon)).unwrap()
    }

    #[test]
    fn one_step_by_hand() {
        let next = step(&[1.0], params(0.05, 0.5));
        assert_eq!(next, vec![1.5, 0.05]);
        let still = step(&[2.0, 3.0], params(0.0, 0.0));
        assert_eq!(still, vec![2.0, 3.0, 0.0]);
    }

    #[test]
    fn row_thirty_matches_closed_form() {
        let q = ModelParams::new(0.05, 0.5).unwrap();
        let m = canonical(0.05, 0.5, 29);
        let row30 = step(m.row(29).unwrap(), q);
        for (tau, &n) in row30.iter().enumerate() {
            let exact = model::exact_cohort_count(q, tau, 30).unwrap();
            assert_relative_eq!(n, exact, max_relative = 1e-9);
        }
    }

    #[test]
    fn horizon_zero_is_initial_cohorts() {
        let m = canonical(0.05, 0.5, 0);
        assert_eq!(m.horizon(), 0);
        assert_eq!(m.row(0).unwrap(), &[1.0]);
        assert_eq!(m.filing_year_profile(0).unwrap(), &[1.0]);
    }

    #[test]
    fn config_validation() {
        let q = params(0.05, 0.5);
        let mut c = SimulationConfig::canonical(q, MAX_HORIZON + 1);
        assert_eq!(run(&c), Err(SimError::HorizonTooLarge(MAX_HORIZON + 1)));
        c.horizon = 5;
        c.initial_cohorts = vec![(0, -1.0)];
        assert!(matches!(run(&c), Err(SimError::BadInitialCohort { .. })));
        c.initial_cohorts = vec![(0, 1.0)];
        c.mode = CountMode::Classifications;
        assert_eq!(run(&c), Err(SimError::MissingW0));
    }

    #[test]
    fn overflow_is_reported() {
        let c = SimulationConfig::canonical(params(0.9, 50.0), 2_000);
        assert!(matches!(run(&c), Err(SimError::Overflow { .. })));
    }

    #[test]
    fn totals_nondecreasing_and_cells_nonnegative() {
        let m = canonical(0.03, 0.7, 80);
        assert!(m.cells().all(|(_, _, n)| n >= 0.0));
        let totals = m.totals();
        assert!(totals.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(m.cell(5, 3), 0.0);
    }

    #[test]
    fn growth_ratio_converges_to_root() {
        let q = ModelParams::new(0.025, 0.4).unwrap();
        let m = canonical(0.025, 0.4, 201);
        let g = model::growth_factor(q, 1e-13).unwrap().g;
        assert!((m.total(201) / m.total(200) - g).abs() < 1e-4);
    }

    #[test]
    fn profile_is_unimodal_with_dip() {
        let m = canonical(0.05, 0.5, 40);
        let row = m.filing_year_profile(40).unwrap();
        let peak = m.peak_filing_year(40).unwrap();
        assert!(row[1..=peak].windows(2).all(|w| w[1] > w[0]));
        assert!(row[peak..].windows(2).all(|w| w[1] < w[0]));
        let q = ModelParams::new(0.05, 0.5).unwrap();
        let g = model::growth_factor(q, 1e-12).unwrap().g;
        let lag = (40 - peak) as f64;
        assert!((lag - 0.5 / (g - 1.0)).abs() <= 1.0, "lag {lag}");
    }

    #[test]
    fn peak_lag_near_decline_time_realistic_scale() {
        let m = canonical(0.025, 0.4, 60);
        let lag = 60 - m.peak_filing_year(60).unwrap();
        assert!((4..=6).contains(&lag), "lag {lag}");
    }

    #[test]
    fn peak_year_tie_rule() {
        assert_eq!(peak_year(&[2.0, 2.0, 2.0]).unwrap(), 0);
        assert_eq!(peak_year(&[1.0, 2.0, 3.0]).unwrap(), 2);
        assert_eq!(peak_year(&[1.0, 3.0, 3.0, 1.0]).unwrap(), 1);
        assert_eq!(peak_year(&[]), Err(SimError::EmptyProfile));
    }

    #[test]
    fn reclassified_total_cases() {
        let m = canonical(0.05, 0.0, 10);
        for t in 1..=10 {
            assert_eq!(m.reclassified_total(t).unwrap(), 0.0);
        }
        let m = canonical(0.0, 0.5, 3);
        assert_relative_eq!(m.reclassified_total(1).unwrap(), 0.5 * m.cell(0, 1) / 2.0);
        assert_eq!(m.reclassified_total(0), Err(SimError::NeedPositiveTime));
    }

    #[test]
    fn bookkeeping_identity() {
        let m = canonical(0.04, 0.6, 120);
        for t in 1..120 {
            let lhs = m.total(t + 1) - m.total(t);
            let rhs = 0.04 * m.total(t) + m.reclassified_total(t).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn reclassification_proportion_converges() {
        let q = ModelParams::new(0.05, 0.5).unwrap();
        let m = canonical(0.05, 0.5, 300);
        let g = model::growth_factor(q, 1e-13).unwrap().g;
        let v = m.reclassified_total(300).unwrap() / m.total(300);
        let expected = g - 1.0 - 0.05;
        assert!((v / expected - 1.0).abs() < 0.05);
    }

    #[test]
    fn linear_in_initial_count() {
        let q = params(0.03, 0.45);
        let unit = run(&SimulationConfig::canonical(q, 50)).unwrap();
        let mut c = SimulationConfig::canonical(q, 50);
        c.initial_cohorts = vec![(0, 7.5)];
        let scaled = run(&c).unwrap();
        for ((_, _, a), (_, _, b)) in unit.cells().zip(scaled.cells()) {
            assert_relative_eq!(b, 7.5 * a, max_relative = 1e-13);
        }
    }

    #[test]
    fn later_injection_opens_cohort() {
        let q = params(0.0, 0.5);
        let mut c = SimulationConfig::canonical(q, 4);
        c.initial_cohorts.push((2, 3.0));
        let m = run(&c).unwrap();
        assert_eq!(m.cell(2, 2), 3.0);
        assert_relative_eq!(m.cell(2, 3), 4.5);
    }

    #[test]
    fn classification_mode_tracks_unique_patents() {
        let q = params(0.024, 0.4);
        let m = run(&SimulationConfig::canonical(q, 400).with_classifications(1.25)).unwrap();
        assert_eq!(m.mode(), CountMode::Classifications);
        let g = model::growth_factor(ModelParams::new(0.024, 0.4).unwrap(), 1e-13)
            .unwrap()
            .g;
        let w = m.class_per_patent_at(400).unwrap();
        let predicted = model::class_per_patent(1.25, g, 0.024).unwrap();
        assert!((w / predicted - 1.0).abs() < 0.01, "{w} vs {predicted}");
    }

    #[test]
    fn events_zero_without_reclassification() {
        let m = canonical(0.05, 0.0, 20);
        let s = m.emit_reclass_events(&[Window::new(10, 3)]).unwrap();
        assert!(!s.records.is_empty());
        assert!(s.records.iter().all(|r| r.reclassified == 0.0));
    }

    #[test]
    fn events_single_cohort_by_hand() {
        let m = canonical(0.0, 0.4, 10);
        let s = m.emit_reclass_events(&[Window::new(4, 3)]).unwrap();
        // only cohort 0 exists when alpha = 0
        assert_eq!(s.records.len(), 3);
        for r in &s.records {
            assert_eq!(r.filing_year, 0);
            assert!(r.event_year > r.filing_year);
            let before = m.cell(0, r.event_year as usize - 1);
            assert_relative_eq!(r.classifications_before, before);
            assert_relative_eq!(r.rate(), 0.4 / r.event_year as f64, max_relative = 1e-14);
        }
        let total: f64 = s.records.iter().map(|r| r.reclassified).sum();
        assert_relative_eq!(total, m.cell(0, 7) - m.cell(0, 4), max_relative = 1e-13);
    }

    #[test]
    fn window_must_fit() {
        let m = canonical(0.05, 0.4, 10);
        assert!(matches!(
            m.emit_reclass_events(&[Window::new(8, 3)]),
            Err(SimError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn sweep_matches_sequential_runs() {
        let configs: Vec<_> = [0.2, 0.4, 0.6]
            .iter()
            .enumerate()
            .map(|(i, &b)| (i, SimulationConfig::canonical(params(0.03, b), 40)))
            .collect();
        let out = sweep(&configs);
        for (k, c) in &configs {
            assert_eq!(out[k].as_ref().unwrap(), &run(c).unwrap());
        }
    }
}
