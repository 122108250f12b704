//! Candidate model sets, BIC-p model weights and SOIL importance scores.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{GroupSource, GroupedDesign};
use crate::regression::{criteria, fit_ols, CriterionValue, OlsFit, RegressionError};
use crate::solvers::{fit_path, PenaltySpec, SolverError};

/// A model given by the groups it contains, refitted by OLS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateModel {
    pub groups: BTreeSet<usize>,
    /// Union of the groups' column index sets, ascending.
    pub columns: Vec<usize>,
    pub fit: OlsFit,
    pub criterion: CriterionValue,
}

/// Deduplicated candidate models sharing one design (and hence one `p*`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    pub p_star: usize,
    pub models: Vec<CandidateModel>,
    /// Which solver paths contributed, e.g. `["glasso", "gscad", "gmcp"]`.
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedModelSet {
    pub set: ModelSet,
    pub weights: Vec<f64>,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub group: usize,
    pub label: String,
    pub source: GroupSource,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    /// In design group order.
    pub entries: Vec<ImportanceEntry>,
    pub psi: f64,
    pub provenance: Vec<String>,
}

impl ImportanceVector {
    pub fn score(&self, group: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.group == group).map(|e| e.score)
    }

    /// Groups by descending score; ties by ascending group index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<&ImportanceEntry> = self.entries.iter().collect();
        order.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.group.cmp(&b.group)));
        order.into_iter().map(|e| e.group).collect()
    }
}

/// Refits every distinct group set (plus the null model), dropping sets with
/// at least `n - 1` columns. The output is sorted by group set.
pub fn model_set_from_group_sets<I>(
    design: &GroupedDesign,
    response: &[f64],
    group_sets: I,
    provenance: Vec<String>,
) -> Result<ModelSet, RegressionError>
where
    I: IntoIterator<Item = BTreeSet<usize>>,
{
    let n = design.n_rows();
    let mut distinct: BTreeSet<BTreeSet<usize>> = group_sets.into_iter().collect();
    distinct.insert(BTreeSet::new());
    let keep: Vec<BTreeSet<usize>> =
        distinct.into_iter().filter(|g| design.column_count(g) + 1 < n || g.is_empty()).collect();
    let p_star = design.n_cols();
    let models = keep
        .into_par_iter()
        .map(|groups| {
            let columns = design.columns_of(&groups);
            let fit = fit_ols(design, &columns, response)?;
            let criterion = criteria(&fit, columns.len(), p_star, 1.0);
            Ok(CandidateModel { groups, columns, fit, criterion })
        })
        .collect::<Result<Vec<_>, RegressionError>>()?;
    Ok(ModelSet { p_star, models, provenance })
}

/// Harvests the active sets of every step of every path.
pub fn assemble_candidates(
    design: &GroupedDesign,
    response: &[f64],
    specs: &[PenaltySpec],
) -> Result<ModelSet, SolverError> {
    let paths =
        specs.par_iter().map(|spec| fit_path(design, response, spec)).collect::<Result<Vec<_>, SolverError>>()?;
    let sets = paths.iter().flat_map(|p| p.steps.iter().map(|s| s.active_groups.clone()));
    let provenance = specs.iter().map(|s| s.penalty.short_name().to_string()).collect();
    Ok(model_set_from_group_sets(design, response, sets, provenance)?)
}

/// Normalized `exp(x_i)` computed as `exp(x_i - max x)` over the sum.
pub fn softmax(exponents: &[f64]) -> Vec<f64> {
    let top = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if exponents.is_empty() || !top.is_finite() {
        let k = exponents.len();
        return vec![1.0 / k as f64; k];
    }
    let raw: Vec<f64> = exponents.iter().map(|x| (x - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

/// `w_M` proportional to `exp(-I_M / 2 - psi * C_M)` with `I_M` the BIC.
pub fn bicp_weights(set: ModelSet, psi: f64) -> WeightedModelSet {
    let exponents: Vec<f64> = set.models.iter().map(|m| -0.5 * m.criterion.bic - psi * m.criterion.c_m).collect();
    WeightedModelSet { weights: softmax(&exponents), set, psi }
}

/// `S_j`: total weight of the models whose columns contain every column of group `j`.
pub fn soil(design: &GroupedDesign, weighted: &WeightedModelSet, target_groups: &BTreeSet<usize>) -> ImportanceVector {
    let column_sets: Vec<BTreeSet<usize>> =
        weighted.set.models.iter().map(|m| m.columns.iter().copied().collect()).collect();
    let entries = target_groups
        .iter()
        .map(|&g| {
            let group = design.group(g);
            let score: f64 = column_sets
                .iter()
                .zip(&weighted.weights)
                .filter(|(cols, _)| group.columns.clone().all(|c| cols.contains(&c)))
                .map(|(_, w)| w)
                .sum();
            ImportanceEntry { group: g, label: group.label.clone(), source: group.source, score: score.min(1.0) }
        })
        .collect();
    ImportanceVector { entries, psi: weighted.psi, provenance: weighted.set.provenance.clone() }
}

/// SOIL over every group of `design` using the three default penalty paths.
pub fn soil_importance(
    design: &GroupedDesign,
    response: &[f64],
    specs: &[PenaltySpec],
    psi: f64,
) -> Result<(WeightedModelSet, ImportanceVector), SolverError> {
    let weighted = bicp_weights(assemble_candidates(design, response, specs)?, psi);
    let all: BTreeSet<usize> = (0..design.n_groups()).collect();
    let imp = soil(design, &weighted, &all);
    Ok((weighted, imp))
}

/// Weight mass per group set, handy for inspection and tests.
pub fn weight_map(weighted: &WeightedModelSet) -> BTreeMap<BTreeSet<usize>, f64> {
    weighted.set.models.iter().zip(&weighted.weights).map(|(m, &w)| (m.groups.clone(), w)).collect()
}
