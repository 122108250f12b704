//! Least-squares refits on column subsets and the information criteria built on them.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::encoding::GroupedDesign;
use crate::linalg::PivotedQr;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error("need at least 2 observations, got {0}")]
    TooFewRows(usize),
    #[error("response length {got} does not match design rows {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("response contains a non-finite value at row {0}")]
    NonFiniteResponse(usize),
    #[error("column index {0} is out of range")]
    ColumnOutOfRange(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub intercept: f64,
    /// `(design column, coefficient)` in ascending column order.
    pub coefficients: Vec<(usize, f64)>,
    pub rss: f64,
    /// Total sum of squares about the mean; used for the rss floor.
    pub tss: f64,
    pub n: usize,
    /// Intercept plus numerical rank of the fitted columns.
    pub df: usize,
    pub rank: usize,
    pub sigma2_hat: Option<f64>,
    /// Set when `n <= rank + 1`, i.e. no residual degrees of freedom.
    pub degenerate: bool,
}

impl OlsFit {
    pub fn coefficient(&self, column: usize) -> Option<f64> {
        self.coefficients.iter().find(|(c, _)| *c == column).map(|&(_, b)| b)
    }
}

/// Per-coefficient classical OLS inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    /// `None` for the intercept.
    pub column: Option<usize>,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

pub(crate) fn validate_response(n: usize, response: &[f64]) -> Result<(), RegressionError> {
    if response.len() != n {
        return Err(RegressionError::LengthMismatch { expected: n, got: response.len() });
    }
    if n < 2 {
        return Err(RegressionError::TooFewRows(n));
    }
    if let Some(row) = response.iter().position(|v| !v.is_finite()) {
        return Err(RegressionError::NonFiniteResponse(row));
    }
    Ok(())
}

struct CenteredProblem {
    qr: PivotedQr,
    means: Vec<f64>,
    y_mean: f64,
    yc: Vec<f64>,
}

fn centered_problem(design: &GroupedDesign, columns: &[usize], response: &[f64]) -> Result<CenteredProblem, RegressionError> {
    let n = design.n_rows();
    validate_response(n, response)?;
    if let Some(&bad) = columns.iter().find(|&&c| c >= design.n_cols()) {
        return Err(RegressionError::ColumnOutOfRange(bad));
    }
    let k = columns.len();
    let mut a = Vec::with_capacity(n * k);
    let mut means = Vec::with_capacity(k);
    for &c in columns {
        let col = design.column(c);
        let m = col.iter().sum::<f64>() / n as f64;
        means.push(m);
        a.extend(col.iter().map(|v| v - m));
    }
    let y_mean = response.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = response.iter().map(|v| v - y_mean).collect();
    Ok(CenteredProblem { qr: PivotedQr::new(a, n, k), means, y_mean, yc })
}

/// Least squares of `response` on an intercept plus the given design columns.
///
/// Columns are centered first, so the intercept is never part of the rank
/// decision; rank-deficient subsets receive the minimum-norm solution.
pub fn fit_ols(design: &GroupedDesign, columns: &[usize], response: &[f64]) -> Result<OlsFit, RegressionError> {
    let mut columns = columns.to_vec();
    columns.sort_unstable();
    columns.dedup();
    let prob = centered_problem(design, &columns, response)?;
    let (beta, rss) = prob.qr.solve(&prob.yc);
    let n = design.n_rows();
    let rank = prob.qr.rank();
    let df = rank + 1;
    let intercept = prob.y_mean - beta.iter().zip(&prob.means).map(|(b, m)| b * m).sum::<f64>();
    let tss = prob.yc.iter().map(|v| v * v).sum();
    let degenerate = n <= rank + 1;
    Ok(OlsFit {
        intercept,
        coefficients: columns.into_iter().zip(beta).collect(),
        rss,
        tss,
        n,
        df,
        rank,
        sigma2_hat: (!degenerate).then(|| rss / (n - df) as f64),
        degenerate,
    })
}

/// Classical t-based inference for a full-rank, non-degenerate fit; `None` otherwise.
pub fn ols_inference(design: &GroupedDesign, columns: &[usize], response: &[f64]) -> Result<Option<Vec<CoefficientRow>>, RegressionError> {
    let fit = fit_ols(design, columns, response)?;
    let mut columns = columns.to_vec();
    columns.sort_unstable();
    columns.dedup();
    let prob = centered_problem(design, &columns, response)?;
    let (Some(sigma2), Some(inv)) = (fit.sigma2_hat, prob.qr.inverse_gram()) else {
        return Ok(None);
    };
    let n = fit.n as f64;
    let resid_df = (fit.n - fit.df) as f64;
    let t_dist = StudentsT::new(0.0, 1.0, resid_df).expect("positive residual df");
    let p_of = |t: f64| if t.is_finite() { 2.0 * t_dist.sf(t.abs()) } else { 0.0 };

    // Var(intercept) = sigma2 * (1/n + m' (Xc'Xc)^{-1} m)
    let k = columns.len();
    let m = &prob.means;
    let quad: f64 = (0..k).flat_map(|a| (0..k).map(move |b| (a, b))).map(|(a, b)| m[a] * inv[b * k + a] * m[b]).sum();
    let var_intercept = sigma2 * (1.0 / n + quad);
    let mut rows = Vec::with_capacity(k + 1);
    let se0 = var_intercept.max(0.0).sqrt();
    let t0 = fit.intercept / se0;
    rows.push(CoefficientRow { column: None, estimate: fit.intercept, std_error: se0, t_value: t0, p_value: p_of(t0) });
    for (idx, &(col, b)) in fit.coefficients.iter().enumerate() {
        let se = (sigma2 * inv[idx * k + idx]).sqrt();
        let t = b / se;
        rows.push(CoefficientRow { column: Some(col), estimate: b, std_error: se, t_value: t, p_value: p_of(t) });
    }
    Ok(Some(rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionValue {
    pub aic: f64,
    pub bic: f64,
    pub c_m: f64,
    pub aic_p: f64,
    pub bic_p: f64,
}

/// Descriptive-complexity term `|M| log(e p*/|M|) + 2 log(|M|+2)`, with the `|M| = 0` limit `2 log 2`.
pub fn complexity(model_columns: usize, p_star: usize) -> f64 {
    let m = model_columns as f64;
    let head = if model_columns == 0 { 0.0 } else { m * (1.0 + (p_star as f64 / m).ln()) };
    head + 2.0 * (m + 2.0).ln()
}

/// Gaussian profile-likelihood AIC/BIC and their complexity-penalized variants.
pub fn criteria(fit: &OlsFit, model_columns: usize, p_star: usize, psi: f64) -> CriterionValue {
    debug_assert!(psi > 0.0 && p_star >= model_columns);
    let n = fit.n as f64;
    let floor = (1e-12 * fit.tss).max(f64::MIN_POSITIVE);
    let loglik_term = n * (fit.rss.max(floor) / n).ln();
    let df = fit.df as f64;
    let aic = loglik_term + 2.0 * df;
    let bic = loglik_term + df * n.ln();
    let c_m = complexity(model_columns, p_star);
    CriterionValue { aic, bic, c_m, aic_p: aic + 2.0 * psi * c_m, bic_p: bic + 2.0 * psi * c_m }
}
