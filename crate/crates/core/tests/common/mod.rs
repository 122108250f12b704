#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use vibim::encoding::{encode, GroupedDesign, Predictor, PredictorSchema, RawColumn, RawTable};
use vibim::rng::{task_rng, TaskRng};

pub fn rng(seed: u64) -> TaskRng {
    task_rng(seed, 0xC0FFEE)
}

pub fn normal(rng: &mut TaskRng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn continuous(cols: Vec<Vec<f64>>) -> GroupedDesign {
    let schema = PredictorSchema::new((0..cols.len()).map(|i| Predictor::continuous(format!("x{i}"))).collect()).unwrap();
    encode(&schema, &RawTable { columns: cols.into_iter().map(RawColumn::Continuous).collect() }).unwrap()
}

pub fn random_continuous(n: usize, p: usize, rng: &mut TaskRng) -> GroupedDesign {
    continuous((0..p).map(|_| (0..n).map(|_| normal(rng)).collect()).collect())
}

/// Random mix of continuous predictors and categoricals with 2-4 levels,
/// keeping the column count at most `max_cols`.
pub fn random_mixed(n: usize, max_cols: usize, rng: &mut TaskRng) -> GroupedDesign {
    let mut entries = Vec::new();
    let mut columns = Vec::new();
    let mut used = 0;
    while used < max_cols {
        let k = entries.len();
        if rng.random_bool(0.4) {
            let levels = rng.random_range(2..=4usize).min(max_cols - used + 1);
            if levels >= 2 {
                let names: Vec<String> = (0..levels).map(|l| format!("l{l}")).collect();
                let col: Vec<String> = (0..n).map(|_| names[rng.random_range(0..levels)].clone()).collect();
                entries.push(Predictor::categorical(format!("c{k}"), names.clone()));
                columns.push(RawColumn::Categorical(col));
                used += levels - 1;
                continue;
            }
        }
        entries.push(Predictor::continuous(format!("x{k}")));
        columns.push(RawColumn::Continuous((0..n).map(|_| normal(rng)).collect()));
        used += 1;
        if rng.random_bool(0.25) {
            break;
        }
    }
    encode(&PredictorSchema::new(entries).unwrap(), &RawTable { columns }).unwrap()
}

/// Least squares of `y` on `[1, X_S]` by SVD; returns (intercept, slopes, rss, rank of [1, X_S]).
pub fn svd_ols(design: &GroupedDesign, columns: &[usize], y: &[f64]) -> (f64, Vec<f64>, f64, usize) {
    let n = design.n_rows();
    let a = DMatrix::from_fn(n, columns.len() + 1, |i, j| if j == 0 { 1.0 } else { design.column(columns[j - 1])[i] });
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.max();
    let eps = top * 1e-10 * n.max(columns.len() + 1) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let b = svd.solve(&DVector::from_column_slice(y), eps).unwrap();
    let resid = DVector::from_column_slice(y) - &a * &b;
    (b[0], b.iter().skip(1).copied().collect(), resid.norm_squared(), rank)
}

/// `|M| log(e p*/|M|) + 2 log(|M| + 2)`, with the empty model giving `2 log 2`.
pub fn c_m(m: usize, p_star: usize) -> f64 {
    let mf = m as f64;
    let head = if m == 0 { 0.0 } else { mf * (std::f64::consts::E * p_star as f64 / mf).ln() };
    head + 2.0 * (mf + 2.0).ln()
}

/// Every subset of `0..k`, as ordered sets.
pub fn all_subsets(k: usize) -> Vec<BTreeSet<usize>> {
    (0u32..1 << k).map(|mask| (0..k).filter(|&i| mask >> i & 1 == 1).collect()).collect()
}

/// SOIL by direct enumeration: every group subset with at most `n - 2`
/// columns, BIC from an SVD refit, weights by log-sum-exp.
pub fn brute_force_soil(design: &GroupedDesign, y: &[f64], psi: f64) -> Vec<f64> {
    let n = design.n_rows();
    let nf = n as f64;
    let p_star = design.n_cols();
    let mean = y.iter().sum::<f64>() / nf;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let mut models = Vec::new();
    for groups in all_subsets(design.n_groups()) {
        let cols: Vec<usize> = groups.iter().flat_map(|&g| design.group(g).columns.clone()).collect();
        if !groups.is_empty() && cols.len() + 1 >= n {
            continue;
        }
        let (_, _, rss, rank) = svd_ols(design, &cols, y);
        let rss = rss.max(1e-12 * tss);
        let bic = nf * (rss / nf).ln() + rank as f64 * nf.ln();
        models.push((cols, -0.5 * bic - psi * c_m(cols_len(design, &groups), p_star)));
    }
    let top = models.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = models.iter().map(|m| (m.1 - top).exp()).sum();
    (0..design.n_groups())
        .map(|g| {
            let need: Vec<usize> = design.group(g).columns.clone().collect();
            models
                .iter()
                .filter(|(cols, _)| need.iter().all(|c| cols.contains(c)))
                .map(|(_, e)| (e - top).exp() / total)
                .sum()
        })
        .collect()
}

fn cols_len(design: &GroupedDesign, groups: &BTreeSet<usize>) -> usize {
    groups.iter().map(|&g| design.group(g).size()).sum()
}

/// Orthogonal projection of `v` onto the span of the centered columns.
pub fn project_centered(design: &GroupedDesign, columns: &[usize], v: &[f64]) -> Vec<f64> {
    let n = design.n_rows();
    let mut a = DMatrix::zeros(n, columns.len());
    for (j, &c) in columns.iter().enumerate() {
        let col = design.column(c);
        let m = col.iter().sum::<f64>() / n as f64;
        for i in 0..n {
            a[(i, j)] = col[i] - m;
        }
    }
    let svd = a.clone().svd(true, true);
    let eps = svd.singular_values.max() * 1e-10 * n as f64;
    if eps == 0.0 {
        return vec![0.0; n];
    }
    let b = svd.solve(&DVector::from_column_slice(v), eps).unwrap();
    (&a * b).iter().copied().collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest group-LASSO KKT violation at one path step, measured on the
/// original design: with `r = y - b0 - X b` and `P_g` the projection onto
/// group `g`'s centered span, active groups need
/// `|| P_g r - lambda w sqrt(n) f_g / ||f_g|| || / sqrt(n) <= tol` where
/// `f_g = X_g b_g` (centered), and inactive groups `||P_g r|| / sqrt(n) <= lambda w (1 + tol)`.
/// Returns the worst `(active excess, inactive ratio excess)`.
pub fn group_lasso_kkt(design: &GroupedDesign, y: &[f64], beta: &[f64], intercept: f64, lambda: f64) -> (f64, f64) {
    let n = design.n_rows();
    let nf = n as f64;
    let r: Vec<f64> = (0..n)
        .map(|i| y[i] - intercept - (0..design.n_cols()).map(|j| beta[j] * design.column(j)[i]).sum::<f64>())
        .collect();
    let mut worst_active: f64 = 0.0;
    let mut worst_inactive: f64 = 0.0;
    for group in design.groups() {
        let cols: Vec<usize> = group.columns.clone().collect();
        let w = (cols.len() as f64).sqrt();
        let pr = project_centered(design, &cols, &r);
        let mut f = vec![0.0; n];
        for &c in &cols {
            let col = design.column(c);
            let m = col.iter().sum::<f64>() / nf;
            for i in 0..n {
                f[i] += beta[c] * (col[i] - m);
            }
        }
        let fnorm = norm(&f);
        if cols.iter().any(|&c| beta[c] != 0.0) && fnorm > 0.0 {
            let d: Vec<f64> = (0..n).map(|i| pr[i] - lambda * w * nf.sqrt() * f[i] / fnorm).collect();
            worst_active = worst_active.max(norm(&d) / nf.sqrt());
        } else {
            let g = norm(&pr) / nf.sqrt();
            worst_inactive = worst_inactive.max(g / (lambda * w) - 1.0);
        }
    }
    (worst_active, worst_inactive)
}
