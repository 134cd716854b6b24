//! Parameter recovery: `β` from reclassification rates, `α` and `W₀` from
//! back-corrected classification counts, and measured growth factors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, ModelError, ModelParams};
use crate::simulator::{CohortMatrix, ReclassEventStream};

/// Default number of event years aggregated by one reclassification moment.
pub const DEFAULT_WINDOW: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("event stream is empty")]
    EmptyStream,
    #[error("sample (filing year {filing_year}, window {window_start}) has an event year equal to or before the filing year")]
    LagNotPositive { filing_year: i32, window_start: i32 },
    #[error("record for filing year {filing_year} has a nonpositive denominator")]
    NonPositiveDenominator { filing_year: i32 },
    #[error("record event year {event_year} lies outside window [{window_start}, {}]", window_start + *window_len as i32)]
    EventOutsideWindow {
        window_start: i32,
        window_len: u32,
        event_year: i32,
    },
    #[error("beta = {0} is outside the range allowed by the correction")]
    BetaOutOfRange(f64),
    #[error("no count for filing year {filing_year} at observation year {observation_year}")]
    MissingEntry { filing_year: i32, observation_year: i32 },
    #[error("invalid count table entry: {0}")]
    InvalidEntry(String),
    #[error("estimation failed: {0}")]
    Failed(String),
    #[error("growth fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("count {count} in year {year} cannot be log-transformed")]
    NonPositiveCount { year: i32, count: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, EstimationError>;

// ---------------------------------------------------------------------------
// β from reclassification rates
// ---------------------------------------------------------------------------

/// Which years a window starting at edition year `s` is taken to cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LagConvention {
    /// `t = s+1, …, s+w`: the years in which reclassifications land. Matches the
    /// forward dynamics exactly.
    #[default]
    EventYear,
    /// `t = s, …, s+w−1`: the edition year and the years after it.
    EditionYear,
}

impl LagConvention {
    fn event_years(self, window_start: i32, window: u32) -> impl Iterator<Item = i32> {
        let first = match self {
            LagConvention::EventYear => window_start + 1,
            LagConvention::EditionYear => window_start,
        };
        first..first + window as i32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub beta_hat: f64,
    pub sum_squared_residual: f64,
    pub n_samples: usize,
}

/// One window sample: observed rate and summed inverse-lag factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSample {
    pub filing_year: i32,
    pub window_start: i32,
    pub rate: f64,
    pub inverse_lag: f64,
}

/// Groups records into window samples. The rate of a sample is the sum of its
/// records' rates; the regressor is `Σ_j 1/(t_j − τ)` over the window's years.
pub fn rate_samples(stream: &ReclassEventStream, window: u32, convention: LagConvention) -> Result<Vec<RateSample>> {
    if stream.records.is_empty() {
        return Err(EstimationError::EmptyStream);
    }
    let mut rates: BTreeMap<(i32, i32), f64> = BTreeMap::new();
    for r in &stream.records {
        if !(r.classifications_before > 0.0) {
            return Err(EstimationError::NonPositiveDenominator {
                filing_year: r.filing_year,
            });
        }
        if r.event_year < r.window_start || r.event_year > r.window_start + window as i32 {
            return Err(EstimationError::EventOutsideWindow {
                window_start: r.window_start,
                window_len: window,
                event_year: r.event_year,
            });
        }
        *rates.entry((r.filing_year, r.window_start)).or_insert(0.0) += r.rate();
    }
    rates
        .into_iter()
        .map(|((filing_year, window_start), rate)| {
            let mut inverse_lag = 0.0;
            for t in convention.event_years(window_start, window) {
                if t <= filing_year {
                    return Err(EstimationError::LagNotPositive {
                        filing_year,
                        window_start,
                    });
                }
                inverse_lag += 1.0 / (t - filing_year) as f64;
            }
            Ok(RateSample {
                filing_year,
                window_start,
                rate,
                inverse_lag,
            })
        })
        .collect()
}

/// Least squares through the origin of `r = β · Σ_j 1/(t_j − τ)`.
pub fn fit_beta(stream: &ReclassEventStream, window: u32, convention: LagConvention) -> Result<BetaFit> {
    let samples = rate_samples(stream, window, convention)?;
    let sxy: f64 = samples.iter().map(|s| s.rate * s.inverse_lag).sum();
    let sxx: f64 = samples.iter().map(|s| s.inverse_lag * s.inverse_lag).sum();
    let beta_hat = sxy / sxx;
    let sum_squared_residual = samples
        .iter()
        .map(|s| (s.rate - beta_hat * s.inverse_lag).powi(2))
        .sum();
    Ok(BetaFit {
        beta_hat,
        sum_squared_residual,
        n_samples: samples.len(),
    })
}

// ---------------------------------------------------------------------------
// α and W₀ from classification counts
// ---------------------------------------------------------------------------

/// `C_{Y,Y'}`: classifications of filing year `Y` observed in year `Y'`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassificationCountTable {
    pub present_year: i32,
    entries: BTreeMap<(i32, i32), f64>,
    unique_families: BTreeMap<i32, f64>,
}

impl ClassificationCountTable {
    pub fn new(present_year: i32) -> Self {
        Self {
            present_year,
            ..Self::default()
        }
    }

    pub fn insert(&mut self, filing_year: i32, observation_year: i32, count: f64) -> Result<()> {
        if !(count >= 0.0 && count.is_finite()) {
            return Err(EstimationError::InvalidEntry(format!(
                "count {count} for ({filing_year}, {observation_year})"
            )));
        }
        if observation_year > self.present_year || observation_year < filing_year {
            return Err(EstimationError::InvalidEntry(format!(
                "observation year {observation_year} outside [{filing_year}, {}]",
                self.present_year
            )));
        }
        self.entries.insert((filing_year, observation_year), count);
        Ok(())
    }

    pub fn set_unique_families(&mut self, filing_year: i32, families: f64) -> Result<()> {
        if !(families >= 0.0 && families.is_finite()) {
            return Err(EstimationError::InvalidEntry(format!(
                "unique families {families} for {filing_year}"
            )));
        }
        self.unique_families.insert(filing_year, families);
        Ok(())
    }

    pub fn get(&self, filing_year: i32, observation_year: i32) -> Option<f64> {
        self.entries.get(&(filing_year, observation_year)).copied()
    }

    pub fn unique_families(&self, filing_year: i32) -> Option<f64> {
        self.unique_families.get(&filing_year).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (i32, i32, f64)> + '_ {
        self.entries.iter().map(|(&(y, o), &c)| (y, o, c))
    }

    pub fn filing_years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = self.entries.keys().map(|&(y, _)| y).collect();
        years.dedup();
        years
    }

    /// Table of a simulated run with model time shifted by `base_year`. In
    /// classification mode the unique-family column is filled from `n_τ(τ)/w0`.
    pub fn from_matrix(matrix: &CohortMatrix, base_year: i32) -> Self {
        let mut table = Self::new(base_year + matrix.horizon() as i32);
        for (tau, t, n) in matrix.cells() {
            table.entries.insert((base_year + tau as i32, base_year + t as i32), n);
        }
        for (tau, u) in matrix.unique_patents().into_iter().enumerate() {
            table.unique_families.insert(base_year + tau as i32, u);
        }
        table
    }
}

/// How one year of reclassification growth is undone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    /// Multiply by `1 − β/k` (first-order inverse of the forward factor).
    Linear,
    /// Divide by `1 + β/k` (exact inverse of the forward factor).
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackCorrection {
    pub correction: Correction,
    /// Factors with lag `k` above this are dropped (treated as 1).
    pub depth: Option<u32>,
}

impl BackCorrection {
    /// `(1 − β/k)` factors, lags up to 10.
    pub const fn linear() -> Self {
        Self {
            correction: Correction::Linear,
            depth: Some(10),
        }
    }

    /// `1/(1 + β/k)` factors at every lag.
    pub const fn exact() -> Self {
        Self {
            correction: Correction::Exact,
            depth: None,
        }
    }

    fn check(&self, beta: f64) -> Result<()> {
        let ok = match self.correction {
            Correction::Linear => (0.0..1.0).contains(&beta),
            Correction::Exact => beta >= 0.0 && beta.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(EstimationError::BetaOutOfRange(beta))
        }
    }

    fn factor(&self, beta: f64, k: i32) -> f64 {
        if self.depth.is_some_and(|d| k > d as i32) {
            return 1.0;
        }
        match self.correction {
            Correction::Linear => 1.0 - beta / k as f64,
            Correction::Exact => 1.0 / (1.0 + beta / k as f64),
        }
    }

    /// Projects a present-day count of filing year `filing_year` back to
    /// `target_year`: applies the factors for lags `k = target−Y'+1 … P−Y'`.
    pub fn project(&self, count_present: f64, beta: f64, filing_year: i32, target_year: i32, present_year: i32) -> f64 {
        let first = target_year - filing_year + 1;
        let last = present_year - filing_year;
        (first..=last).fold(count_present, |acc, k| acc * self.factor(beta, k))
    }
}

impl Default for BackCorrection {
    fn default() -> Self {
        Self::linear()
    }
}

fn present_count(table: &ClassificationCountTable, filing_year: i32) -> Result<f64> {
    table
        .get(filing_year, table.present_year)
        .ok_or(EstimationError::MissingEntry {
            filing_year,
            observation_year: table.present_year,
        })
}

/// Estimated classifications of filing year `year` at its introduction,
/// `C_{Y,Y} = C_{Y,P} ∏_k f(k)`.
pub fn back_correct(table: &ClassificationCountTable, beta: f64, year: i32, scheme: &BackCorrection) -> Result<f64> {
    scheme.check(beta)?;
    let c = present_count(table, year)?;
    Ok(scheme.project(c, beta, year, year, table.present_year))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub alpha_hat: f64,
    pub w0_hat: Option<f64>,
    pub year: i32,
    /// Set when `alpha_hat` falls outside `(0, 1)`.
    pub flagged: bool,
}

/// `α̂ = C_{Y,Y} / Σ_{Y'<Y} C_{Y',Y−1}` with every term back-projected from the
/// present. `W₀` is `C_{Y,Y}` over the unique families of `Y` when known.
pub fn estimate_alpha(
    table: &ClassificationCountTable,
    beta: f64,
    year: i32,
    scheme: &BackCorrection,
) -> Result<AlphaEstimate> {
    let intro = back_correct(table, beta, year, scheme)?;
    let present = table.present_year;
    let mut stock = 0.0;
    for earlier in table.filing_years().into_iter().filter(|&y| y < year) {
        let c = present_count(table, earlier)?;
        stock += scheme.project(c, beta, earlier, year - 1, present);
    }
    if !(stock > 0.0) {
        return Err(EstimationError::Failed(format!(
            "no classifications filed before {year}"
        )));
    }
    let alpha_hat = intro / stock;
    let w0_hat = table.unique_families(year).filter(|&u| u > 0.0).map(|u| intro / u);
    Ok(AlphaEstimate {
        alpha_hat,
        w0_hat,
        year,
        flagged: !(alpha_hat > 0.0 && alpha_hat < 1.0),
    })
}

// ---------------------------------------------------------------------------
// Growth factors and the asymptotic prefactor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub g_hat: f64,
    pub r2: f64,
    pub slope: f64,
    pub intercept: f64,
    pub n_points: usize,
}

/// OLS of `ln(count)` on year; `g = exp(slope)`. `range` is inclusive.
pub fn fit_growth_ols(series: &[(i32, f64)], range: Option<(i32, i32)>) -> Result<GrowthFit> {
    let points: Vec<(f64, f64)> = series
        .iter()
        .filter(|(y, _)| range.is_none_or(|(a, b)| (a..=b).contains(y)))
        .map(|&(year, count)| {
            if count > 0.0 {
                Ok((year as f64, count.ln()))
            } else {
                Err(EstimationError::NonPositiveCount { year, count })
            }
        })
        .collect::<Result<_>>()?;
    if points.len() < 3 {
        return Err(EstimationError::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy > 0.0 {
        (1.0 - ssr / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(GrowthFit {
        g_hat: slope.exp(),
        r2,
        slope,
        intercept,
        n_points: points.len(),
    })
}

/// `n(t*)/g^{t*}`, the constant in `n(t) ≃ n₀ g^t`.
pub fn estimate_prefactor(params: ModelParams, t_star: usize) -> Result<f64> {
    let g = model::growth_factor(params, model::DEFAULT_TOL)?.g;
    Ok(model::prefactor(params, g, t_star))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{run, ReclassRecord, SimulationConfig, Window};
    use approx::assert_relative_eq;

    fn synthetic_stream(beta: f64) -> ReclassEventStream {
        let mut records = Vec::new();
        for start in [20, 23] {
            for tau in 0..=start {
                let h: f64 = (1..=3).map(|j| 1.0 / (start + j - tau) as f64).sum();
                records.push(ReclassRecord {
                    filing_year: tau,
                    window_start: start,
                    event_year: start + 3,
                    reclassified: beta * h * 1000.0,
                    classifications_before: 1000.0,
                });
            }
        }
        ReclassEventStream { records }
    }

    fn simulated(alpha: f64, beta: f64, horizon: usize) -> crate::simulator::CohortMatrix {
        let q = ModelParams::dynamics(alpha, beta).unwrap();
        run(&SimulationConfig::canonical(q, horizon)).unwrap()
    }

    #[test]
    fn fit_beta_noiseless_linear() {
        let fit = fit_beta(&synthetic_stream(0.4), 3, LagConvention::EventYear).unwrap();
        assert!((fit.beta_hat - 0.4).abs() < 1e-12);
        assert!(fit.sum_squared_residual < 1e-20);
        assert_eq!(fit.n_samples, 21 + 24);
    }

    #[test]
    fn fit_beta_zero_rates() {
        let fit = fit_beta(&synthetic_stream(0.0), 3, LagConvention::EventYear).unwrap();
        assert_eq!(fit.beta_hat, 0.0);
    }

    #[test]
    fn fit_beta_scales_linearly() {
        let mut s = synthetic_stream(0.3);
        for (i, r) in s.records.iter_mut().enumerate() {
            r.reclassified *= 1.0 + 0.01 * (i % 7) as f64;
        }
        let base = fit_beta(&s, 3, LagConvention::EventYear).unwrap().beta_hat;
        for r in &mut s.records {
            r.reclassified *= 2.5;
        }
        let scaled = fit_beta(&s, 3, LagConvention::EventYear).unwrap().beta_hat;
        assert_relative_eq!(scaled, 2.5 * base, max_relative = 1e-13);
    }

    #[test]
    fn fit_beta_rejections() {
        let empty = ReclassEventStream::default();
        assert_eq!(
            fit_beta(&empty, 3, LagConvention::EventYear),
            Err(EstimationError::EmptyStream)
        );
        // filing year at the window start: the edition-year convention has t_0 = τ
        let s = ReclassEventStream {
            records: vec![ReclassRecord {
                filing_year: 10,
                window_start: 10,
                event_year: 13,
                reclassified: 1.0,
                classifications_before: 10.0,
            }],
        };
        assert!(fit_beta(&s, 3, LagConvention::EventYear).is_ok());
        assert!(matches!(
            fit_beta(&s, 3, LagConvention::EditionYear),
            Err(EstimationError::LagNotPositive { .. })
        ));
    }

    #[test]
    fn fit_beta_simulation_round_trip() {
        let m = simulated(0.025, 0.4, 80);
        let s = m
            .emit_reclass_events(&[Window::new(60, 3), Window::new(63, 3), Window::new(66, 4)])
            .unwrap();
        // window length 4 for the last moment exceeds the fit window: rejected
        assert!(fit_beta(&s, 3, LagConvention::EventYear).is_err());
        let s = m
            .emit_reclass_events(&[Window::new(60, 3), Window::new(63, 3), Window::new(66, 3)])
            .unwrap();
        let fit = fit_beta(&s, 3, LagConvention::EventYear).unwrap();
        assert!((fit.beta_hat / 0.4 - 1.0).abs() < 0.05, "{}", fit.beta_hat);
    }

    #[test]
    fn edition_year_convention_bias_is_bounded() {
        // Labelling the window by its edition years shifts every lag down by
        // one; on model data that understates beta, but by a bounded amount.
        let m = simulated(0.025, 0.4, 80);
        let s = m.emit_reclass_events(&[Window::new(60, 3)]).unwrap();
        let mut s = s;
        s.records.retain(|r| r.filing_year < 60);
        let fit = fit_beta(&s, 3, LagConvention::EditionYear).unwrap();
        let ratio = fit.beta_hat / 0.4;
        assert!(ratio > 0.5 && ratio < 1.0, "{ratio}");
    }

    #[test]
    fn back_correct_examples() {
        let mut t = ClassificationCountTable::new(2020);
        t.insert(2018, 2020, 100.0).unwrap();
        t.insert(2005, 2020, 100.0).unwrap();
        let linear = BackCorrection::linear();
        assert_eq!(back_correct(&t, 0.0, 2018, &linear).unwrap(), 100.0);
        assert_relative_eq!(
            back_correct(&t, 0.4, 2018, &linear).unwrap(),
            48.0,
            max_relative = 1e-14
        );
        // P − Y = 15 with depth 10: factors k = 1..=10 only
        let explicit: f64 = 100.0 * (1..=10).map(|k| 1.0 - 0.4 / k as f64).product::<f64>();
        assert_relative_eq!(
            back_correct(&t, 0.4, 2005, &linear).unwrap(),
            explicit,
            max_relative = 1e-14
        );
        let full = BackCorrection { depth: None, ..linear };
        let all: f64 = 100.0 * (1..=15).map(|k| 1.0 - 0.4 / k as f64).product::<f64>();
        assert_relative_eq!(back_correct(&t, 0.4, 2005, &full).unwrap(), all, max_relative = 1e-14);
        assert_eq!(
            back_correct(&t, 1.0, 2018, &linear),
            Err(EstimationError::BetaOutOfRange(1.0))
        );
        assert!(back_correct(&t, 1.0, 2018, &BackCorrection::exact()).is_ok());
    }

    #[test]
    fn back_correct_identity_at_zero_beta() {
        let m = simulated(0.05, 0.3, 30);
        let t = ClassificationCountTable::from_matrix(&m, 1990);
        for y in t.filing_years() {
            let c = t.get(y, t.present_year).unwrap();
            for scheme in [BackCorrection::linear(), BackCorrection::exact()] {
                assert_eq!(back_correct(&t, 0.0, y, &scheme).unwrap(), c);
            }
        }
    }

    #[test]
    fn exact_back_correction_inverts_simulation() {
        let m = simulated(0.03, 0.5, 40);
        let t = ClassificationCountTable::from_matrix(&m, 0);
        for y in [5, 20, 33] {
            let got = back_correct(&t, 0.5, y, &BackCorrection::exact()).unwrap();
            assert_relative_eq!(got, m.cell(y as usize, y as usize), max_relative = 1e-12);
        }
    }

    #[test]
    fn alpha_pure_triggering() {
        let m = simulated(0.05, 0.0, 40);
        let t = ClassificationCountTable::from_matrix(&m, 1970);
        for scheme in [BackCorrection::linear(), BackCorrection::exact()] {
            let est = estimate_alpha(&t, 0.0, 1995, &scheme).unwrap();
            assert!((est.alpha_hat - 0.05).abs() < 1e-9);
            assert!(!est.flagged);
        }
    }

    #[test]
    fn alpha_simulation_round_trip() {
        let m = simulated(0.025, 0.4, 60);
        let t = ClassificationCountTable::from_matrix(&m, 1960);
        let est = estimate_alpha(&t, 0.4, 1990, &BackCorrection::exact()).unwrap();
        assert!((0.0225..=0.0275).contains(&est.alpha_hat), "{}", est.alpha_hat);
    }

    #[test]
    fn linear_correction_underestimates_alpha() {
        // (1 − β/k) shrinks more than the dynamics grew, so α̂ comes out low.
        let m = simulated(0.025, 0.4, 60);
        let t = ClassificationCountTable::from_matrix(&m, 1960);
        let exact = estimate_alpha(&t, 0.4, 2010, &BackCorrection::exact()).unwrap();
        let linear = estimate_alpha(&t, 0.4, 2010, &BackCorrection::linear()).unwrap();
        assert!(linear.alpha_hat < exact.alpha_hat);
        assert!(linear.alpha_hat > 0.5 * exact.alpha_hat);
    }

    #[test]
    fn alpha_reference_band_and_w0() {
        let q = ModelParams::dynamics(0.0255, 0.4).unwrap();
        let m = run(&SimulationConfig::canonical(q, 55).with_classifications(1.25)).unwrap();
        let t = ClassificationCountTable::from_matrix(&m, 1968);
        for y in 2011..=2016 {
            let est = estimate_alpha(&t, 0.4, y, &BackCorrection::exact()).unwrap();
            assert!(est.alpha_hat > 0.024 && est.alpha_hat < 0.027, "{y}: {}", est.alpha_hat);
            assert_relative_eq!(est.w0_hat.unwrap(), 1.25, max_relative = 1e-9);
        }
    }

    #[test]
    fn alpha_missing_entry() {
        let mut t = ClassificationCountTable::new(2020);
        t.insert(2010, 2020, 5.0).unwrap();
        assert!(matches!(
            estimate_alpha(&t, 0.2, 2011, &BackCorrection::exact()),
            Err(EstimationError::MissingEntry { .. })
        ));
        assert!(matches!(
            estimate_alpha(&t, 0.2, 2010, &BackCorrection::exact()),
            Err(EstimationError::Failed(_))
        ));
        assert!(t.insert(2010, 2021, 1.0).is_err());
        assert!(t.insert(2010, 2009, 1.0).is_err());
        assert!(t.insert(2010, 2015, -1.0).is_err());
    }

    #[test]
    fn growth_ols_geometric() {
        let series: Vec<(i32, f64)> = (1980..2016).map(|y| (y, 7.0 * 1.08f64.powi(y - 1980))).collect();
        let fit = fit_growth_ols(&series, None).unwrap();
        assert_relative_eq!(fit.g_hat, 1.08, max_relative = 1e-12);
        assert_relative_eq!(fit.slope, 1.08f64.ln(), max_relative = 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn growth_ols_on_exact_totals() {
        let q = ModelParams::new(0.025, 0.4).unwrap();
        let g = model::growth_factor(q, 1e-13).unwrap().g;
        let series: Vec<(i32, f64)> = (150..185).map(|t| (t, model::exact_total(q, t as usize))).collect();
        let fit = fit_growth_ols(&series, Some((150, 184))).unwrap();
        assert!((fit.g_hat - g).abs() < 0.002);
    }

    #[test]
    fn growth_ols_rejections() {
        let series = vec![(1, 1.0), (2, 0.0), (3, 2.0)];
        assert!(matches!(
            fit_growth_ols(&series, None),
            Err(EstimationError::NonPositiveCount { year: 2, .. })
        ));
        assert_eq!(
            fit_growth_ols(&series, Some((1, 1))),
            Err(EstimationError::TooFewPoints(1))
        );
    }

    #[test]
    fn prefactor_cases() {
        let q = ModelParams::new(0.05, 0.0).unwrap();
        assert_relative_eq!(estimate_prefactor(q, 200).unwrap(), 1.0, max_relative = 1e-10);

        let q = ModelParams::new(0.05, 0.5).unwrap();
        let a = estimate_prefactor(q, 150).unwrap();
        let b = estimate_prefactor(q, 250).unwrap();
        assert!((a / b - 1.0).abs() < 1e-4, "{a} {b}");

        let q = ModelParams::new(0.025, 0.4).unwrap();
        let n0 = estimate_prefactor(q, 200).unwrap();
        let g = model::growth_factor(q, model::DEFAULT_TOL).unwrap().g;
        for t in (100..=200).step_by(10) {
            let approx = n0 * g.powi(t);
            assert!((approx / model::exact_total(q, t as usize) - 1.0).abs() < 0.01);
        }
    }
}
