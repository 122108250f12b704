//! Interaction F/G accuracy, PIVS/SIVS instability and variance inflation factors.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{GroupSource, GroupedDesign};
use crate::regression::{fit_ols, RegressionError};
use crate::rng::{derive_seed, task_rng};
use crate::solvers::{two_stage, PenaltySpec, Tuning};
use crate::vibim::{run_vibim, VibimConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluationError {
    #[error("selector failed: {0}")]
    SelectorFailure(String),
    #[error("perturbation size must be positive and finite, got {0}")]
    InvalidTau(f64),
    #[error("removal fraction must lie in [0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("replications must be at least 1")]
    NoReplications,
    #[error("every replication failed")]
    AllReplicationsFailed,
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionScore {
    pub f: f64,
    pub g: f64,
    pub selected: BTreeSet<(usize, usize)>,
    pub truth: BTreeSet<(usize, usize)>,
}

/// `(F, G)` of a selected set against a true set. Both empty scores 1, one empty scores 0.
pub fn f_and_g<T: Ord>(selected: &BTreeSet<T>, truth: &BTreeSet<T>) -> (f64, f64) {
    match (selected.is_empty(), truth.is_empty()) {
        (true, true) => (1.0, 1.0),
        (true, false) | (false, true) => (0.0, 0.0),
        _ => {
            let hit = selected.intersection(truth).count() as f64;
            let (a, b) = (selected.len() as f64, truth.len() as f64);
            (2.0 * hit / (a + b), hit / (a * b).sqrt())
        }
    }
}

pub fn fg_measure(selected: &BTreeSet<(usize, usize)>, truth: &BTreeSet<(usize, usize)>) -> InteractionScore {
    let (f, g) = f_and_g(selected, truth);
    InteractionScore { f, g, selected: selected.clone(), truth: truth.clone() }
}

/// Interaction pairs among a set of group sources.
pub fn pairs_of(sources: &BTreeSet<GroupSource>) -> BTreeSet<(usize, usize)> {
    sources
        .iter()
        .filter_map(|s| match *s {
            GroupSource::Interaction(i, j) => Some((i, j)),
            GroupSource::Main(_) => None,
        })
        .collect()
}

/// A variable-selection procedure evaluated for stability.
///
/// It receives a main-effects design and must be a pure function of
/// `(design, response, seed)`. The result is a set of group labels.
pub trait Selector: Sync {
    fn name(&self) -> String;
    fn select(&self, design: &GroupedDesign, response: &[f64], seed: u64) -> Result<BTreeSet<String>, String>;
}

/// Top-`size` groups of the VIBIM stage-2 ranking.
#[derive(Debug, Clone)]
pub struct VibimSelector {
    pub config: VibimConfig,
    pub size: usize,
}

impl Selector for VibimSelector {
    fn name(&self) -> String {
        format!("VIBIM_{}", self.size)
    }

    fn select(&self, design: &GroupedDesign, response: &[f64], _seed: u64) -> Result<BTreeSet<String>, String> {
        let report = run_vibim(design, response, &self.config).map_err(|e| e.to_string())?;
        Ok(report.ranking.iter().take(self.size).map(|r| r.label.clone()).collect())
    }
}

/// Two-stage group-penalized baseline; `size` reads the size-`size` model
/// off the stage-2 path instead of the tuned selection.
#[derive(Debug, Clone)]
pub struct TwoStageSelector {
    pub spec: PenaltySpec,
    pub tuning: Tuning,
    pub size: Option<usize>,
}

impl Selector for TwoStageSelector {
    fn name(&self) -> String {
        match self.size {
            Some(s) => format!("{}_{s}", self.spec.penalty.short_name()),
            None => self.spec.penalty.short_name().to_string(),
        }
    }

    fn select(&self, design: &GroupedDesign, response: &[f64], seed: u64) -> Result<BTreeSet<String>, String> {
        let mut rng = task_rng(seed, 0);
        let ts = two_stage(design, response, &self.spec, self.tuning, self.size.is_none(), &mut rng).map_err(|e| e.to_string())?;
        let sources = match self.size {
            Some(s) => ts.model_of_size(s),
            None => ts.selected_sources(),
        };
        Ok(sources
            .into_iter()
            .map(|src| {
                let g = ts.stage2_design.group_of_source(src).expect("source comes from the stage-2 design");
                ts.stage2_design.group(g).label.clone()
            })
            .collect())
    }
}

/// Always returns the same labels.
#[derive(Debug, Clone)]
pub struct ConstantSelector(pub BTreeSet<String>);

impl Selector for ConstantSelector {
    fn name(&self) -> String {
        "constant".into()
    }

    fn select(&self, _: &GroupedDesign, _: &[f64], _: u64) -> Result<BTreeSet<String>, String> {
        Ok(self.0.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityScore {
    /// Mean symmetric-difference size over successful replications.
    pub value: f64,
    /// `tau` for PIVS, the removal fraction for SIVS.
    pub parameter: f64,
    pub replications: usize,
    pub failures: usize,
}

/// Noise scale for PIVS: residual sd of the full main-effects fit when it is
/// estimable, otherwise of the largest plausible VIBIM model.
pub fn estimate_sigma(design: &GroupedDesign, response: &[f64], config: &VibimConfig) -> Result<f64, String> {
    let n = design.n_rows();
    if design.n_cols() + 2 < n {
        let cols: Vec<usize> = (0..design.n_cols()).collect();
        let fit = fit_ols(design, &cols, response).map_err(|e| e.to_string())?;
        if let Some(s2) = fit.sigma2_hat {
            return Ok(s2.sqrt());
        }
    }
    let report = run_vibim(design, response, config).map_err(|e| e.to_string())?;
    let (_, upper) = report.window();
    report.nested_models[upper - 1]
        .fit
        .sigma2_hat
        .map(f64::sqrt)
        .ok_or_else(|| "no estimable model for the noise scale".to_string())
}

fn sym_diff(a: &BTreeSet<String>, b: &BTreeSet<String>) -> usize {
    a.symmetric_difference(b).count()
}

fn summarize(parameter: f64, results: Vec<Option<usize>>) -> Result<StabilityScore, EvaluationError> {
    let ok: Vec<usize> = results.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(EvaluationError::AllReplicationsFailed);
    }
    Ok(StabilityScore {
        value: ok.iter().sum::<usize>() as f64 / ok.len() as f64,
        parameter,
        replications: ok.len(),
        failures: results.len() - ok.len(),
    })
}

/// Perturbation instability: rerun on `y + tau * sigma_hat * e` and average
/// the symmetric difference to `baseline`. The selector seed is held fixed.
#[allow(clippy::too_many_arguments)]
pub fn pivs(
    selector: &dyn Selector,
    design: &GroupedDesign,
    response: &[f64],
    baseline: &BTreeSet<String>,
    sigma_hat: f64,
    tau: f64,
    reps: usize,
    seed: u64,
) -> Result<StabilityScore, EvaluationError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(EvaluationError::InvalidTau(tau));
    }
    if reps == 0 {
        return Err(EvaluationError::NoReplications);
    }
    let results: Vec<Option<usize>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = task_rng(seed, rep as u64);
            let y: Vec<f64> =
                response.iter().map(|v| v + tau * sigma_hat * rng.sample::<f64, _>(StandardNormal)).collect();
            selector.select(design, &y, seed).ok().map(|s| sym_diff(&s, baseline))
        })
        .collect();
    summarize(tau, results)
}

/// Subsampling instability: drop `floor(fraction * n)` rows uniformly without
/// replacement, rerun, and average the symmetric difference to `baseline`.
pub fn sivs(
    selector: &dyn Selector,
    design: &GroupedDesign,
    response: &[f64],
    baseline: &BTreeSet<String>,
    fraction: f64,
    reps: usize,
    seed: u64,
) -> Result<StabilityScore, EvaluationError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(EvaluationError::InvalidFraction(fraction));
    }
    if reps == 0 {
        return Err(EvaluationError::NoReplications);
    }
    let n = design.n_rows();
    let drop = (fraction * n as f64).floor() as usize;
    if drop == 0 {
        return Ok(StabilityScore { value: 0.0, parameter: fraction, replications: reps, failures: 0 });
    }
    let results: Vec<Option<usize>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = task_rng(derive_seed(seed, 0x5175), rep as u64);
            let removed: BTreeSet<usize> = sample(&mut rng, n, drop).into_iter().collect();
            let keep: Vec<usize> = (0..n).filter(|i| !removed.contains(i)).collect();
            let y: Vec<f64> = keep.iter().map(|&i| response[i]).collect();
            selector.select(&design.select_rows(&keep), &y, seed).ok().map(|s| sym_diff(&s, baseline))
        })
        .collect();
    summarize(fraction, results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifEntry {
    pub column: usize,
    pub label: String,
    /// `+inf` under exact collinearity.
    pub vif: f64,
    pub exceeds_four: bool,
    pub infinite: bool,
}

/// `1 / (1 - R^2)` of each column regressed on the other listed columns.
pub fn vif(design: &GroupedDesign, columns: &[usize]) -> Result<Vec<VifEntry>, EvaluationError> {
    let mut out = Vec::with_capacity(columns.len());
    for (k, &col) in columns.iter().enumerate() {
        let others: Vec<usize> = columns.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, &c)| c).collect();
        let target = design.column(col);
        let fit = fit_ols(design, &others, target)?;
        let value = if fit.tss <= 0.0 || fit.rss <= 1e-12 * fit.tss {
            f64::INFINITY
        } else {
            fit.tss / fit.rss
        };
        out.push(VifEntry {
            column: col,
            label: design.column_labels()[col].clone(),
            vif: value,
            exceeds_four: value > 4.0,
            infinite: value.is_infinite(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{encode, Predictor, PredictorSchema, RawColumn, RawTable};

    fn design(cols: Vec<Vec<f64>>) -> GroupedDesign {
        let schema =
            PredictorSchema::new((0..cols.len()).map(|i| Predictor::continuous(format!("x{i}"))).collect()).unwrap();
        encode(&schema, &RawTable { columns: cols.into_iter().map(RawColumn::Continuous).collect() }).unwrap()
    }

    #[test]
    fn fg_hand_values() {
        let a = BTreeSet::from([(0, 1), (2, 3)]);
        let t = BTreeSet::from([(0, 1)]);
        let s = fg_measure(&a, &t);
        assert!((s.f - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.g - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(f_and_g(&t, &t), (1.0, 1.0));
        assert_eq!(f_and_g(&BTreeSet::<u8>::new(), &BTreeSet::new()), (1.0, 1.0));
        assert_eq!(f_and_g(&BTreeSet::from([1]), &BTreeSet::new()), (0.0, 0.0));
        assert_eq!(f_and_g(&BTreeSet::from([1]), &BTreeSet::from([2])), (0.0, 0.0));
    }

    #[test]
    fn vif_orthogonal_duplicate_and_correlated() {
        let a = vec![1.0, -1.0, 1.0, -1.0];
        let b = vec![1.0, 1.0, -1.0, -1.0];
        let d = design(vec![a.clone(), b.clone(), a.clone()]);
        let v = vif(&d, &[0, 1]).unwrap();
        assert!(v.iter().all(|e| (e.vif - 1.0).abs() < 1e-12 && !e.exceeds_four));
        let v = vif(&d, &[0, 2]).unwrap();
        assert!(v.iter().all(|e| e.infinite && e.exceeds_four));

        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let z = vec![2.0, 1.0, 4.0, 3.0, 6.0];
        let mx = 3.0;
        let mz = 3.2;
        let sxz: f64 = x.iter().zip(&z).map(|(a, b)| (a - mx) * (b - mz)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        let szz: f64 = z.iter().map(|b| (b - mz) * (b - mz)).sum();
        let r2 = sxz * sxz / (sxx * szz);
        let v = vif(&design(vec![x, z]), &[0, 1]).unwrap();
        assert!((v[0].vif - 1.0 / (1.0 - r2)).abs() < 1e-10);
        assert!((v[1].vif - 1.0 / (1.0 - r2)).abs() < 1e-10);
    }

    #[test]
    fn constant_selector_is_perfectly_stable() {
        let d = design(vec![(0..20).map(f64::from).collect()]);
        let y: Vec<f64> = (0..20).map(|i| (i * i % 7) as f64).collect();
        let sel = ConstantSelector(BTreeSet::from(["x0".to_string()]));
        let base = sel.0.clone();
        assert_eq!(pivs(&sel, &d, &y, &base, 1.0, 0.5, 4, 1).unwrap().value, 0.0);
        assert_eq!(sivs(&sel, &d, &y, &base, 0.2, 4, 1).unwrap().value, 0.0);
        assert_eq!(sivs(&sel, &d, &y, &base, 0.01, 4, 1).unwrap().value, 0.0);
        assert!(pivs(&sel, &d, &y, &base, 1.0, 0.0, 4, 1).is_err());
        assert!(sivs(&sel, &d, &y, &base, 0.1, 0, 1).is_err());
    }
}
