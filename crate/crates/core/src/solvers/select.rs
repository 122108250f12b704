//! Tuning-parameter selection along a path and the two-stage baseline procedures.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fit_path_on, resolve_grid, PenaltySpec, SolverError, SolverPath, WorkingDesign};
use crate::encoding::{all_pairs, augment_interactions, GroupSource, GroupedDesign};
use crate::regression::{criteria, fit_ols, validate_response};

/// A path step chosen by a tuning rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub groups: BTreeSet<usize>,
    pub step: usize,
    pub lambda: f64,
    /// Tuning score per path step (mean out-of-fold squared error, or BIC).
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Tuning {
    Cv { folds: usize },
    Bic,
}

fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        // NaN never wins
        if v < values[best] || values[best].is_nan() && !v.is_nan() {
            best = i;
        }
    }
    best
}

fn selection_at(path: &SolverPath, scores: Vec<f64>) -> Selection {
    let step = argmin_first(&scores);
    let s = &path.steps[step];
    Selection { groups: s.active_groups.clone(), step, lambda: s.lambda, scores }
}

/// Runs the full-data path, then picks the step minimizing `folds`-fold
/// cross-validated squared prediction error. Ties go to the earliest step.
pub fn select_by_cv<R: Rng + ?Sized>(
    design: &GroupedDesign,
    response: &[f64],
    spec: &PenaltySpec,
    folds: usize,
    rng: &mut R,
) -> Result<(SolverPath, Selection), SolverError> {
    spec.validate()?;
    validate_response(design.n_rows(), response)?;
    let n = design.n_rows();
    if folds < 2 || folds > n {
        return Err(SolverError::InvalidSpec(format!("need 2 <= folds <= n, got {folds} folds for n = {n}")));
    }
    let grid = resolve_grid(design, response, spec)?;
    let full = fit_path_on(&WorkingDesign::new(design, spec.standardize)?, response, spec, &grid);
    let steps = full.steps.len();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut fold_of = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % folds;
    }

    let mut sse = vec![0.0; steps];
    for f in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] == f);
        let sub = design.select_rows(&train);
        let y_train: Vec<f64> = train.iter().map(|&i| response[i]).collect();
        let path = match WorkingDesign::new(&sub, spec.standardize) {
            Ok(wd) => Some(fit_path_on(&wd, &y_train, spec, &grid[..steps])),
            // every column constant on the training rows: predict the training mean
            Err(SolverError::AllConstantDesign) => None,
            Err(e) => return Err(e),
        };
        let train_mean = y_train.iter().sum::<f64>() / y_train.len() as f64;
        for (k, total) in sse.iter_mut().enumerate() {
            let step = path.as_ref().map(|p| &p.steps[k.min(p.steps.len() - 1)]);
            for &i in &test {
                let pred = match step {
                    Some(s) => s.intercept + (0..design.n_cols()).map(|j| s.beta[j] * design.column(j)[i]).sum::<f64>(),
                    None => train_mean,
                };
                *total += (response[i] - pred).powi(2);
            }
        }
    }
    let scores = sse.into_iter().map(|s| s / n as f64).collect();
    let sel = selection_at(&full, scores);
    Ok((full, sel))
}

/// Picks the path step whose active set has the smallest OLS-refit BIC.
/// Active sets with at least `n - 1` columns are not eligible.
pub fn select_by_bic(
    design: &GroupedDesign,
    response: &[f64],
    spec: &PenaltySpec,
) -> Result<(SolverPath, Selection), SolverError> {
    let path = super::fit_path(design, response, spec)?;
    let n = design.n_rows();
    let mut memo: BTreeMap<&BTreeSet<usize>, f64> = BTreeMap::new();
    let mut scores = Vec::with_capacity(path.steps.len());
    for step in &path.steps {
        if let Some(&v) = memo.get(&step.active_groups) {
            scores.push(v);
            continue;
        }
        let cols = design.columns_of(&step.active_groups);
        let v = if cols.len() + 1 >= n {
            f64::INFINITY
        } else {
            let fit = fit_ols(design, &cols, response)?;
            criteria(&fit, cols.len(), design.n_cols(), 1.0).bic
        };
        memo.insert(&step.active_groups, v);
        scores.push(v);
    }
    let sel = selection_at(&path, scores);
    Ok((path, sel))
}

fn select<R: Rng + ?Sized>(
    design: &GroupedDesign,
    response: &[f64],
    spec: &PenaltySpec,
    tuning: Tuning,
    rng: &mut R,
) -> Result<(SolverPath, Selection), SolverError> {
    match tuning {
        Tuning::Cv { folds } => select_by_cv(design, response, spec, folds, rng),
        Tuning::Bic => select_by_bic(design, response, spec),
    }
}

/// Result of selecting main effects first and then re-selecting over those
/// mains plus all their pairwise interactions.
#[derive(Debug, Clone)]
pub struct TwoStage {
    pub stage1: Selection,
    /// Predictor indices of the stage-1 mains.
    pub stage1_mains: BTreeSet<usize>,
    pub stage2_design: GroupedDesign,
    pub stage2_path: SolverPath,
    /// `None` when stage 2 was only fitted, not tuned.
    pub stage2: Option<Selection>,
}

impl TwoStage {
    /// Sources of the groups selected by the stage-2 tuning rule (empty when untuned).
    pub fn selected_sources(&self) -> BTreeSet<GroupSource> {
        self.stage2
            .iter()
            .flat_map(|s| s.groups.iter())
            .map(|&g| self.stage2_design.group(g).source)
            .collect()
    }

    /// The size-`size` model read off the stage-2 path: among the steps before
    /// the first one exceeding `size` active groups, the largest (latest on ties).
    pub fn model_of_size(&self, size: usize) -> BTreeSet<GroupSource> {
        let empty = BTreeSet::new();
        let mut chosen = &empty;
        for step in &self.stage2_path.steps {
            if step.active_groups.len() > size {
                break;
            }
            if step.active_groups.len() >= chosen.len() {
                chosen = &step.active_groups;
            }
        }
        chosen.iter().map(|&g| self.stage2_design.group(g).source).collect()
    }
}

/// Two-stage baseline: `tuning` selects mains on `design` (main effects
/// only), then stage 2 runs on the selected mains and their pairs. Stage 2 is
/// tuned with the same rule when `tune_stage2` is set, otherwise only its
/// path is fitted (enough for fixed-size models).
pub fn two_stage<R: Rng + ?Sized>(
    design: &GroupedDesign,
    response: &[f64],
    spec: &PenaltySpec,
    tuning: Tuning,
    tune_stage2: bool,
    rng: &mut R,
) -> Result<TwoStage, SolverError> {
    let (_, stage1) = select(design, response, spec, tuning, rng)?;
    let keep: Vec<usize> = stage1.groups.iter().copied().collect();
    let stage1_mains: BTreeSet<usize> = keep
        .iter()
        .filter_map(|&g| match design.group(g).source {
            GroupSource::Main(i) => Some(i),
            GroupSource::Interaction(..) => None,
        })
        .collect();
    let empty_path = SolverPath { penalty: spec.penalty, steps: Vec::new() };
    let empty_selection = || Selection { groups: BTreeSet::new(), step: 0, lambda: f64::NAN, scores: Vec::new() };

    let mains = design.subset_groups(&keep);
    let stage2_design = augment_interactions(&mains, &all_pairs(&stage1_mains))
        .expect("stage-1 mains come from main-effect groups of this design");
    let outcome = if keep.is_empty() {
        Err(SolverError::EmptyDesign)
    } else if tune_stage2 {
        select(&stage2_design, response, spec, tuning, rng).map(|(p, s)| (p, Some(s)))
    } else {
        super::fit_path(&stage2_design, response, spec).map(|p| (p, None))
    };
    let (stage2_path, stage2) = match outcome {
        Ok(r) => r,
        Err(SolverError::AllConstantDesign | SolverError::EmptyDesign) => {
            (empty_path, tune_stage2.then(empty_selection))
        }
        Err(e) => return Err(e),
    };
    Ok(TwoStage { stage1, stage1_mains, stage2_design, stage2_path, stage2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{encode, Predictor, PredictorSchema, RawColumn, RawTable};
    use crate::solvers::{LambdaGrid, Penalty};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn design(cols: Vec<Vec<f64>>) -> GroupedDesign {
        let schema =
            PredictorSchema::new((0..cols.len()).map(|i| Predictor::continuous(format!("x{i}"))).collect()).unwrap();
        encode(&schema, &RawTable { columns: cols.into_iter().map(RawColumn::Continuous).collect() }).unwrap()
    }

    #[test]
    fn argmin_prefers_first_on_ties() {
        assert_eq!(argmin_first(&[3.0, 1.0, 1.0, 2.0]), 1);
        assert_eq!(argmin_first(&[f64::NAN, 2.0]), 1);
    }

    #[test]
    fn size_rule_stops_before_overshoot() {
        let d = design(vec![vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 1.0, 0.0, 1.0], vec![5.0, 1.0, 2.0, 2.0]]);
        let mk = |g: &[usize]| super::super::SolverStep {
            lambda: 1.0,
            beta: vec![0.0; 3],
            intercept: 0.0,
            active_groups: g.iter().copied().collect(),
            converged: true,
            iterations: 1,
            working_beta: vec![],
            objective_trace: None,
        };
        let ts = TwoStage {
            stage1: Selection { groups: BTreeSet::new(), step: 0, lambda: 1.0, scores: vec![] },
            stage1_mains: BTreeSet::new(),
            stage2_design: d,
            stage2_path: SolverPath {
                penalty: Penalty::GroupLasso,
                steps: vec![mk(&[]), mk(&[0]), mk(&[0, 1, 2]), mk(&[0, 1])],
            },
            stage2: None,
        };
        assert_eq!(ts.model_of_size(2), BTreeSet::from([GroupSource::Main(0)]));
        assert_eq!(ts.model_of_size(3).len(), 3);
        assert!(ts.model_of_size(0).is_empty());
    }

    #[test]
    fn cv_is_reproducible_under_seed() {
        let x: Vec<f64> = (0..40).map(|i| ((i * 13) % 17) as f64).collect();
        let z: Vec<f64> = (0..40).map(|i| ((i * 7) % 5) as f64).collect();
        let y: Vec<f64> = x.iter().zip(&z).enumerate().map(|(i, (a, b))| a + 0.1 * b + ((i * 31) % 7) as f64 * 0.3).collect();
        let d = design(vec![x, z]);
        let spec = PenaltySpec::new(Penalty::mcp()).with_grid(LambdaGrid::Auto { n_lambda: 20 });
        let a = select_by_cv(&d, &y, &spec, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap().1;
        let b = select_by_cv(&d, &y, &spec, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap().1;
        assert_eq!(a, b);
        assert!(a.groups.contains(&0));
        assert!(select_by_cv(&d, &y, &spec, 1, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }
}
