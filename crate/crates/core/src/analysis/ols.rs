//! Ordinary least squares with conventional homoskedastic inference.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use super::{AnalysisError, Result};

/// Relative size below which a diagonal entry of R marks a dependent column.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    /// `None` when the standard error is zero (exact fit).
    pub t_value: Option<f64>,
    pub p_value: Option<f64>,
}

impl Coefficient {
    /// Significance stars at p < 0.1 / 0.05 / 0.01.
    pub fn stars(&self) -> &'static str {
        match self.p_value {
            Some(p) if p < 0.01 => "***",
            Some(p) if p < 0.05 => "**",
            Some(p) if p < 0.1 => "*",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub residual_std_error: f64,
    pub f_statistic: Option<f64>,
    pub f_p_value: Option<f64>,
    pub n_obs: usize,
    pub df_residual: usize,
    pub residuals: Vec<f64>,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Regresses `y` on the named `columns`, prepending a column of ones named
/// `(Intercept)` when `intercept` is set. Solved by Householder QR.
pub fn ols(y: &[f64], columns: &[(&str, &[f64])], intercept: bool) -> Result<RegressionResult> {
    let n = y.len();
    let mut names: Vec<String> = Vec::new();
    let mut cols: Vec<&[f64]> = Vec::new();
    let ones = vec![1.0; n];
    if intercept {
        names.push("(Intercept)".into());
        cols.push(&ones);
    }
    for (name, c) in columns {
        if c.len() != n {
            return Err(AnalysisError::LengthMismatch {
                expected: n,
                got: c.len(),
            });
        }
        names.push((*name).to_string());
        cols.push(c);
    }
    let p = cols.len();
    if p == 0 || n <= p {
        return Err(AnalysisError::TooFewObservations { n, p });
    }
    if y.iter()
        .chain(cols.iter().flat_map(|c| c.iter()))
        .any(|v| !v.is_finite())
    {
        return Err(AnalysisError::NonFinite);
    }

    let x = DMatrix::from_fn(n, p, |i, j| cols[j][i]);
    let yv = DVector::from_column_slice(y);
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..p {
        let norm = x.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * norm {
            return Err(AnalysisError::RankDeficient {
                column: names[j].clone(),
            });
        }
    }
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| AnalysisError::RankDeficient {
            column: names[p - 1].clone(),
        })?;
    let fitted = &x * &beta;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let df = n - p;
    let sigma2 = ssr / df as f64;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| AnalysisError::RankDeficient {
            column: names[p - 1].clone(),
        })?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let t_dist = StudentsT::new(0.0, 1.0, df as f64).expect("df > 0");
    let coefficients = (0..p)
        .map(|j| {
            let se = (sigma2 * xtx_inv[(j, j)]).max(0.0).sqrt();
            let (t_value, p_value) = if se > 0.0 {
                let t = beta[j] / se;
                (Some(t), Some(2.0 * (1.0 - t_dist.cdf(t.abs()))))
            } else {
                (None, None)
            };
            Coefficient {
                name: names[j].clone(),
                estimate: beta[j],
                std_error: se,
                t_value,
                p_value,
            }
        })
        .collect();

    let sst: f64 = if intercept {
        let mean = y.iter().sum::<f64>() / n as f64;
        y.iter().map(|v| (v - mean).powi(2)).sum()
    } else {
        y.iter().map(|v| v * v).sum()
    };
    let r_squared = if sst > 0.0 {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let c = usize::from(intercept);
    let adj_r_squared = 1.0 - (1.0 - r_squared) * (n - c) as f64 / df as f64;
    let model_df = p - c;
    let (f_statistic, f_p_value) = if model_df > 0 && ssr > 0.0 && sst > 0.0 {
        let f = ((sst - ssr).max(0.0) / model_df as f64) / sigma2;
        let pv = FisherSnedecor::new(model_df as f64, df as f64)
            .map(|d| 1.0 - d.cdf(f))
            .ok();
        (Some(f), pv)
    } else {
        (None, None)
    };

    Ok(RegressionResult {
        coefficients,
        r_squared,
        adj_r_squared,
        residual_std_error: sigma2.sqrt(),
        f_statistic,
        f_p_value,
        n_obs: n,
        df_residual: df,
        residuals,
    })
}
