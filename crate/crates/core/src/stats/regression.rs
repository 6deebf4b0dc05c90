use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub n: usize,
    pub residual_df: usize,
    pub residual_sd: f64,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }
}

/// Relative pivot size below which a design column counts as collinear.
const RANK_TOL: f64 = 1e-10;

/// Ordinary least squares via Householder QR. `columns` are the design
/// columns (include the intercept column explicitly), `names` label them.
pub fn ols(columns: &[Vec<f64>], names: &[&str], y: &[f64]) -> Result<RegressionResult> {
    let p = columns.len();
    let n = y.len();
    if names.len() != p {
        return Err(Error::invalid("one name per design column required"));
    }
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("design columns must match the target length"));
    }
    if n <= p {
        return Err(Error::invalid(format!("need more observations ({n}) than predictors ({p})")));
    }
    if columns.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in regression input"));
    }
    // Column scaling keeps the pivot test meaningful across units.
    let scales: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .map(|s| if s > 0.0 { s } else { 1.0 })
        .collect();
    let x = DMatrix::from_fn(n, p, |i, j| columns[j][i] / scales[j]);
    let yv = DVector::from_column_slice(y);
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let bad: Vec<usize> = (0..p).filter(|&j| !(r[(j, j)].abs() > RANK_TOL * max_diag.max(f64::MIN_POSITIVE))).collect();
    if !bad.is_empty() || columns.iter().any(|c| c.iter().all(|&v| v == 0.0)) {
        let mut cols: Vec<String> = Vec::new();
        for &j in &bad {
            // Report the offending column together with the earlier columns it depends on.
            let xj = x.column(j).into_owned();
            let sub = x.columns(0, j).into_owned();
            let mut involved: Vec<String> = Vec::new();
            if j > 0 {
                if let Ok(coef) = sub.clone().svd(true, true).solve(&xj, 1e-12) {
                    for k in 0..j {
                        if coef[k].abs() > 1e-8 {
                            involved.push(names[k].to_string());
                        }
                    }
                }
            }
            involved.push(names[j].to_string());
            for name in involved {
                if !cols.contains(&name) {
                    cols.push(name);
                }
            }
        }
        if cols.is_empty() {
            cols = columns
                .iter()
                .zip(names)
                .filter(|(c, _)| c.iter().all(|&v| v == 0.0))
                .map(|(_, n)| n.to_string())
                .collect();
        }
        return Err(Error::RankDeficient { columns: cols });
    }
    let qty = qr.q().transpose() * &yv;
    let beta_scaled = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient { columns: names.iter().map(|s| s.to_string()).collect() })?;
    let fitted = &x * &beta_scaled;
    let resid = &yv - &fitted;
    let rss = resid.dot(&resid);
    let df = n - p;
    let sigma2 = rss / df as f64;
    let mean = yv.mean();
    let tss: f64 = yv.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if tss > 0.0 { (1.0 - rss / tss).max(0.0) } else { 0.0 };

    let rinv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient { columns: names.iter().map(|s| s.to_string()).collect() })?;
    let tdist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Undefined(e.to_string()))?;
    let coefficients = (0..p)
        .map(|j| {
            let estimate = beta_scaled[j] / scales[j];
            let var = sigma2 * rinv.row(j).iter().map(|v| v * v).sum::<f64>();
            let std_error = var.sqrt() / scales[j];
            let (t, p_value) = if std_error > 0.0 {
                let t = estimate / std_error;
                (t, (2.0 * tdist.sf(t.abs())).min(1.0))
            } else if estimate == 0.0 {
                (0.0, 1.0)
            } else {
                (f64::INFINITY.copysign(estimate), 0.0)
            };
            Coefficient { name: names[j].to_string(), estimate, std_error, t, p_value }
        })
        .collect();
    Ok(RegressionResult { coefficients, r_squared, n, residual_df: df, residual_sd: sigma2.sqrt() })
}
