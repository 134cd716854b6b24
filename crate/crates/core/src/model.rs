//! Closed-form side of the reclassification-and-growth model.
//!
//! The dynamics for the expected count `n_τ(t)` of items with filing year `τ`
//! at time `t` are
//!
//! ```text
//! n_{t+1}(t+1) = α · n(t)                         (triggering)
//! n_τ(t+1)     = n_τ(t) · (1 + β / (t − τ + 1))   (reclassification, τ ≤ t)
//! ```
//!
//! with `n(t) = Σ_τ n_τ(t)` and the canonical start `n_τ(0) = δ_{0,τ}`. This
//! module holds the exact solutions of that recurrence, the growth factor `g`
//! (the dominant singularity of the generating function) and the derived
//! quantities `T`, `V` and `W`. Everything here is a pure function.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default bisection tolerance on the bracket width.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Iteration cap for the growth-factor bisection.
pub const MAX_BISECTION_ITERS: usize = 200;
/// Horizon used to pin the asymptotic prefactor `n₀`.
pub const PREFACTOR_HORIZON: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("binomial lower index must be nonnegative, got {0}")]
    NegativeLowerIndex(i64),
    #[error("time {t} precedes filing year {tau}")]
    TimeBeforeFiling { tau: usize, t: usize },
    #[error("alpha must lie in (0, 1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("alpha must be nonnegative, got {0}")]
    NegativeAlpha(f64),
    #[error("beta must be nonnegative, got {0}")]
    NegativeBeta(f64),
    #[error("parameter {0} is not finite")]
    NonFinite(&'static str),
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error("growth equation has no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("growth factor must exceed 1, got {0}")]
    GrowthNotAboveOne(f64),
    #[error("growth factor {g} is below 1 + alpha = {}", 1.0 + alpha)]
    InconsistentGrowth { g: f64, alpha: f64 },
    #[error("z = {z} is at or beyond the dominant singularity")]
    BeyondSingularity { z: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Triggering rate `alpha` and reclassification rate `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
}

impl ModelParams {
    /// Parameters valid for the asymptotic results: `0 < α < 1`, `β ≥ 0`.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = Self::dynamics(alpha, beta)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ModelError::AlphaOutOfRange(alpha));
        }
        Ok(p)
    }

    /// Parameters valid for forward iteration only: `α ≥ 0`, `β ≥ 0`.
    pub fn dynamics(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(ModelError::NonFinite("alpha"));
        }
        if !beta.is_finite() {
            return Err(ModelError::NonFinite("beta"));
        }
        if alpha < 0.0 {
            return Err(ModelError::NegativeAlpha(alpha));
        }
        if beta < 0.0 {
            return Err(ModelError::NegativeBeta(beta));
        }
        Ok(Self { alpha, beta })
    }

    fn check_asymptotic(&self) -> Result<()> {
        Self::new(self.alpha, self.beta).map(|_| ())
    }
}

/// Root of the growth equation together with the asymptotic prefactor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthSolution {
    pub g: f64,
    pub n0: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedQuantities {
    pub decline_time_t: f64,
    pub reclass_proportion_v: f64,
    pub class_per_patent_w: Option<f64>,
    pub w0: Option<f64>,
}

impl PredictedQuantities {
    pub fn from_growth(params: ModelParams, g: f64, w0: Option<f64>) -> Result<Self> {
        let class_per_patent_w = match w0 {
            Some(w0) => Some(class_per_patent(w0, g, params.alpha)?),
            None => None,
        };
        Ok(Self {
            decline_time_t: decline_time(params.beta, g)?,
            reclass_proportion_v: reclass_proportion(g, params.alpha)?,
            class_per_patent_w,
            w0,
        })
    }
}

// ---------------------------------------------------------------------------
// Generalized binomial coefficient
// ---------------------------------------------------------------------------

/// `binom(x, k) = x (x−1) ⋯ (x−k+1) / k!` for real `x` and integer `k ≥ 0`.
pub fn gen_binomial(x: f64, k: i64) -> Result<f64> {
    if k < 0 {
        return Err(ModelError::NegativeLowerIndex(k));
    }
    Ok(binom(x, k as usize))
}

/// Sign and natural log of `|binom(x, k)|`. The sign is `0.0` for an exact zero.
pub fn ln_gen_binomial(x: f64, k: usize) -> (f64, f64) {
    if has_zero_factor(x, k) {
        return (0.0, f64::NEG_INFINITY);
    }
    let mut sign = 1.0;
    let mut ln_abs = 0.0;
    for i in 0..k {
        let f = x - i as f64;
        if f < 0.0 {
            sign = -sign;
        }
        ln_abs += f.abs().ln() - ((i + 1) as f64).ln();
    }
    (sign, ln_abs)
}

fn has_zero_factor(x: f64, k: usize) -> bool {
    x >= 0.0 && x.fract() == 0.0 && x < k as f64
}

const DIRECT_LIMIT: f64 = 1e300;

pub(crate) fn binom(x: f64, k: usize) -> f64 {
    scaled_binom(x, k, 0.0)
}

/// `binom(x, k) · exp(ln_scale)`, falling back to log space when the running
/// product leaves the safe range.
pub(crate) fn scaled_binom(x: f64, k: usize, ln_scale: f64) -> f64 {
    if has_zero_factor(x, k) {
        return 0.0;
    }
    let mut acc = 1.0f64;
    for i in 0..k {
        acc *= (x - i as f64) / (i + 1) as f64;
        if !(acc.abs() < DIRECT_LIMIT) {
            let (sign, ln_abs) = ln_gen_binomial(x, k);
            return sign * (ln_abs + ln_scale).exp();
        }
    }
    if ln_scale == 0.0 {
        acc
    } else {
        let scaled = acc * ln_scale.exp();
        if scaled.is_finite() && (scaled != 0.0 || acc == 0.0) {
            scaled
        } else {
            let (sign, ln_abs) = ln_gen_binomial(x, k);
            sign * (ln_abs + ln_scale).exp()
        }
    }
}

// ---------------------------------------------------------------------------
// Exact solutions
// ---------------------------------------------------------------------------

/// `n_τ(t) = binom(t−τ+β, t−τ) · n_τ(τ)`: growth of a cohort after its introduction.
pub fn cohort_from_intro(params: ModelParams, n_intro: f64, tau: usize, t: usize) -> Result<f64> {
    if t < tau {
        return Err(ModelError::TimeBeforeFiling { tau, t });
    }
    if !(n_intro >= 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "introduction count must be nonnegative, got {n_intro}"
        )));
    }
    let lag = t - tau;
    Ok(binom(lag as f64 + params.beta, lag) * n_intro)
}

/// Size of cohort `τ` at introduction under the canonical initial condition:
/// `n_τ(τ) = Σ_{u=0}^{τ} binom(uβ+τ−1, τ−u) α^u`.
pub fn intro_count(params: ModelParams, tau: usize) -> f64 {
    let ln_alpha = params.alpha.ln();
    (0..=tau)
        .map(|u| {
            let x = u as f64 * params.beta + tau as f64 - 1.0;
            alpha_term(x, tau - u, ln_alpha, u)
        })
        .sum()
}

/// Exact `n_τ(t)` for the canonical start `n_τ(0) = δ_{0,τ}`.
pub fn exact_cohort_count(params: ModelParams, tau: usize, t: usize) -> Result<f64> {
    cohort_from_intro(params, intro_count(params, tau), tau, t)
}

/// Exact `n(t) = Σ_{u=0}^{t} binom((u+1)β+t, t−u) α^u`.
pub fn exact_total(params: ModelParams, t: usize) -> f64 {
    scaled_total(params, t, 0.0)
}

/// `n(t) · exp(ln_scale)`, evaluated termwise so large horizons stay finite.
fn scaled_total(params: ModelParams, t: usize, ln_scale: f64) -> f64 {
    let ln_alpha = params.alpha.ln();
    (0..=t)
        .map(|u| {
            let x = (u + 1) as f64 * params.beta + t as f64;
            match u {
                0 => scaled_binom(x, t, ln_scale),
                _ if params.alpha == 0.0 => 0.0,
                _ => scaled_binom(x, t - u, u as f64 * ln_alpha + ln_scale),
            }
        })
        .sum()
}

// α^u with α = 0 handled (0^0 = 1).
fn alpha_term(x: f64, k: usize, ln_alpha: f64, u: usize) -> f64 {
    if u == 0 {
        binom(x, k)
    } else if ln_alpha == f64::NEG_INFINITY {
        0.0
    } else {
        scaled_binom(x, k, u as f64 * ln_alpha)
    }
}

// ---------------------------------------------------------------------------
// Growth factor
// ---------------------------------------------------------------------------

/// `(1 − 1/g)^{1+β} − α/g`; negative below the root, positive above it.
pub fn growth_residual(params: ModelParams, g: f64) -> f64 {
    (1.0 - 1.0 / g).powf(1.0 + params.beta) - params.alpha / g
}

/// Solves `(1 − 1/g)^{1+β} = α/g` on `[1+α, 1+α+β]` by bisection.
///
/// `β = 0` returns `g = 1 + α` exactly. The returned `n0` is
/// `n(t*) / g^{t*}` at `t* = 200`.
pub fn growth_factor(params: ModelParams, tol: f64) -> Result<GrowthSolution> {
    params.check_asymptotic()?;
    if !(tol > 0.0) {
        return Err(ModelError::NonPositiveTolerance(tol));
    }
    let (g, iterations) = if params.beta == 0.0 {
        (1.0 + params.alpha, 0)
    } else {
        bisect_growth(params, tol)?
    };
    Ok(GrowthSolution {
        g,
        n0: prefactor(params, g, PREFACTOR_HORIZON),
        residual: growth_residual(params, g).abs(),
        iterations,
    })
}

fn bisect_growth(params: ModelParams, tol: f64) -> Result<(f64, usize)> {
    let mut lo = 1.0 + params.alpha;
    let mut hi = 1.0 + params.alpha + params.beta;
    let f_lo = growth_residual(params, lo);
    let f_hi = growth_residual(params, hi);
    if f_lo == 0.0 {
        return Ok((lo, 0));
    }
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(ModelError::NoSignChange { lo, hi });
    }
    let mut iterations = 0;
    while hi - lo > tol && iterations < MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = growth_residual(params, mid);
        if f_mid == 0.0 {
            return Ok((mid, iterations + 1));
        }
        if f_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Ok((0.5 * (lo + hi), iterations))
}

/// `n(t*) / g^{t*}`; converges to the asymptotic prefactor `n₀` as `t*` grows.
pub fn prefactor(params: ModelParams, g: f64, t_star: usize) -> f64 {
    scaled_total(params, t_star, -(t_star as f64) * g.ln())
}

/// Slow-growth approximation `g ≈ 1 + α^{1/(1+β)}`.
pub fn slow_growth_approx(params: ModelParams) -> f64 {
    1.0 + params.alpha.powf(1.0 / (1.0 + params.beta))
}

// ---------------------------------------------------------------------------
// Derived quantities
// ---------------------------------------------------------------------------

/// Lag between the apparent peak filing year and the present, `T = β/(g−1)`.
pub fn decline_time(beta: f64, g: f64) -> Result<f64> {
    if !(g > 1.0) {
        return Err(ModelError::GrowthNotAboveOne(g));
    }
    if beta < 0.0 {
        return Err(ModelError::NegativeBeta(beta));
    }
    Ok(beta / (g - 1.0))
}

/// Yearly reclassification proportion `V = g − 1 − α`.
pub fn reclass_proportion(g: f64, alpha: f64) -> Result<f64> {
    if !(g >= 1.0 + alpha) {
        return Err(ModelError::InconsistentGrowth { g, alpha });
    }
    Ok((g - 1.0 - alpha).max(0.0))
}

/// Classifications per patent `W = W₀ (g−1)/α`.
pub fn class_per_patent(w0: f64, g: f64, alpha: f64) -> Result<f64> {
    if !(w0 > 0.0) {
        return Err(ModelError::InvalidArgument(format!("w0 must be positive, got {w0}")));
    }
    if !(g > 1.0) {
        return Err(ModelError::GrowthNotAboveOne(g));
    }
    if !(alpha > 0.0) {
        return Err(ModelError::AlphaOutOfRange(alpha));
    }
    Ok(w0 * (g - 1.0) / alpha)
}

/// Closed form `G(z) = 1 / ((1−z)^{1+β} − αz)` of `Σ n(t) z^t`.
pub fn generating_function_closed(params: ModelParams, z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(ModelError::InvalidArgument(format!("z must be nonnegative, got {z}")));
    }
    let den = (1.0 - z).max(0.0).powf(1.0 + params.beta) - params.alpha * z;
    if !(den > 0.0) {
        return Err(ModelError::BeyondSingularity { z });
    }
    Ok(1.0 / den)
}

/// Both sides of the Vandermonde-type identity used to close the recursion for
/// `n_τ(τ)`:
///
/// `Σ_k binom(k+β, k) binom(τ+uβ−2−k, τ−1−u−k) = binom((u+1)β+τ−1, τ−u−1)`.
pub fn identity_check(beta: f64, tau: usize, u: usize) -> Result<(f64, f64)> {
    if tau == 0 || u >= tau {
        return Err(ModelError::InvalidArgument(format!(
            "need tau >= 1 and u <= tau - 1, got tau = {tau}, u = {u}"
        )));
    }
    let top = tau - 1 - u;
    let lhs = (0..=top)
        .map(|k| binom(k as f64 + beta, k) * binom(tau as f64 + u as f64 * beta - 2.0 - k as f64, top - k))
        .sum();
    let rhs = binom((u + 1) as f64 * beta + tau as f64 - 1.0, top);
    Ok((lhs, rhs))
}
