//! The VIBIM procedure: main-effect SOIL, screening, interaction augmentation,
//! re-ranking, nested models and the BIC/AIC plausible window.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{all_pairs, augment_interactions, EncodingError, GroupSource, GroupedDesign};
use crate::importance::{soil_importance, ImportanceVector};
use crate::regression::{criteria, fit_ols, ols_inference, CriterionValue, OlsFit, RegressionError};
use crate::solvers::{LambdaGrid, PenaltySpec, SolverError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VibimError {
    #[error("design has no groups")]
    EmptyDesign,
    #[error("need at least 10 observations, got {0}")]
    TooFewRows(usize),
    #[error("design must contain main effects only")]
    NotMainEffects,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HighDimCriteria {
    /// Switch to AIC-p/BIC-p when the stage-2 design has at least `n` columns.
    #[default]
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VibimConfig {
    pub psi: f64,
    pub threshold_c: f64,
    pub max_rank_k: usize,
    pub high_dim_criteria: HighDimCriteria,
    pub n_lambda: usize,
    pub penalties: Vec<PenaltySpec>,
}

impl Default for VibimConfig {
    fn default() -> Self {
        Self {
            psi: 1.0,
            threshold_c: 1e-4,
            max_rank_k: 15,
            high_dim_criteria: HighDimCriteria::Auto,
            n_lambda: 100,
            penalties: PenaltySpec::default_trio(),
        }
    }
}

impl VibimConfig {
    pub fn validate(&self) -> Result<(), VibimError> {
        let bad = |m: String| Err(VibimError::InvalidConfig(m));
        if !(self.threshold_c > 0.0 && self.threshold_c < 1.0) {
            return bad(format!("threshold_c must lie in (0, 1), got {}", self.threshold_c));
        }
        if self.max_rank_k == 0 {
            return bad("max_rank_k must be at least 1".into());
        }
        if !(self.psi > 0.0 && self.psi.is_finite()) {
            return bad(format!("psi must be positive, got {}", self.psi));
        }
        if self.n_lambda == 0 {
            return bad("n_lambda must be positive".into());
        }
        if self.penalties.is_empty() {
            return bad("at least one penalty is required".into());
        }
        for spec in &self.penalties {
            spec.validate()?;
        }
        Ok(())
    }

    fn specs(&self) -> Vec<PenaltySpec> {
        self.penalties
            .iter()
            .map(|s| match s.lambda_grid {
                LambdaGrid::Auto { .. } => s.clone().with_grid(LambdaGrid::Auto { n_lambda: self.n_lambda }),
                LambdaGrid::Explicit(_) => s.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedGroup {
    pub group: usize,
    pub label: String,
    pub source: GroupSource,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCoefficient {
    /// `"(Intercept)"` or the design column label.
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedModel {
    pub size: usize,
    /// Stage-2 group indices, in rank order.
    pub groups: Vec<usize>,
    pub labels: Vec<String>,
    pub sources: Vec<GroupSource>,
    pub column_labels: Vec<String>,
    pub fit: OlsFit,
    pub criterion: CriterionValue,
    /// Classical inference, filled for models inside the plausible window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inference: Option<Vec<LabeledCoefficient>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VibimReport {
    pub n: usize,
    pub config: VibimConfig,
    pub stage1_importance: ImportanceVector,
    /// Predictor indices whose stage-1 score exceeds `threshold_c`.
    pub screened: BTreeSet<usize>,
    pub stage2_importance: ImportanceVector,
    /// `p'`: number of stage-2 groups.
    pub stage2_groups: usize,
    pub stage2_columns: usize,
    pub ranking: Vec<RankedGroup>,
    pub nested_models: Vec<NestedModel>,
    /// Whether AIC-p/BIC-p replaced AIC/BIC in the window search.
    pub high_dim: bool,
    /// 1-based sizes of the BIC and AIC minimizers.
    pub lower: usize,
    pub upper: usize,
}

impl VibimReport {
    /// Inclusive 1-based window `[min(L, U), max(L, U)]`.
    pub fn window(&self) -> (usize, usize) {
        (self.lower.min(self.upper), self.lower.max(self.upper))
    }

    pub fn plausible_models(&self) -> &[NestedModel] {
        let (a, b) = self.window();
        &self.nested_models[a - 1..b]
    }

    /// Group sources of the top-`size` model; `size` beyond the nested range
    /// falls back to the top-`size` of the full ranking.
    pub fn sources_of_size(&self, size: usize) -> BTreeSet<GroupSource> {
        self.ranking.iter().take(size).map(|r| r.source).collect()
    }

    /// Interaction pairs within the top-`size` ranked groups.
    pub fn pairs_of_size(&self, size: usize) -> BTreeSet<(usize, usize)> {
        self.sources_of_size(size)
            .into_iter()
            .filter_map(|s| match s {
                GroupSource::Interaction(i, j) => Some((i, j)),
                GroupSource::Main(_) => None,
            })
            .collect()
    }

    pub fn criterion_pair(&self, model: &NestedModel) -> (f64, f64) {
        if self.high_dim {
            (model.criterion.bic_p, model.criterion.aic_p)
        } else {
            (model.criterion.bic, model.criterion.aic)
        }
    }
}

fn argmin_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Runs all five steps on a main-effects design.
pub fn run_vibim(design: &GroupedDesign, response: &[f64], config: &VibimConfig) -> Result<VibimReport, VibimError> {
    config.validate()?;
    if design.n_groups() == 0 {
        return Err(VibimError::EmptyDesign);
    }
    let n = design.n_rows();
    if n < 10 {
        return Err(VibimError::TooFewRows(n));
    }
    if design.groups().iter().any(|g| g.source.is_interaction()) {
        return Err(VibimError::NotMainEffects);
    }
    let specs = config.specs();

    let (_, stage1) = soil_importance(design, response, &specs, config.psi)?;
    let screened: BTreeSet<usize> = stage1
        .entries
        .iter()
        .filter(|e| e.score > config.threshold_c)
        .filter_map(|e| match e.source {
            GroupSource::Main(i) => Some(i),
            GroupSource::Interaction(..) => None,
        })
        .collect();

    let (stage2_design, stage2) = if screened.len() >= 2 {
        let augmented = augment_interactions(design, &all_pairs(&screened))?;
        let (_, imp) = soil_importance(&augmented, response, &specs, config.psi)?;
        (augmented, imp)
    } else {
        (design.clone(), stage1.clone())
    };

    let ranking: Vec<RankedGroup> = stage2
        .ranking()
        .into_iter()
        .map(|g| {
            let group = stage2_design.group(g);
            RankedGroup { group: g, label: group.label.clone(), source: group.source, score: stage2.score(g).unwrap_or(0.0) }
        })
        .collect();

    // longest prefix within K groups and n/2 columns, but never empty
    let mut k_prime = 0;
    let mut cols = 0;
    for r in ranking.iter().take(config.max_rank_k) {
        cols += stage2_design.group(r.group).size();
        if 2 * cols > n && k_prime > 0 {
            break;
        }
        k_prime += 1;
    }

    let p_star = stage2_design.n_cols();
    let high_dim = match config.high_dim_criteria {
        HighDimCriteria::Auto => p_star >= n,
        HighDimCriteria::Always => true,
        HighDimCriteria::Never => false,
    };

    let mut nested_models = Vec::with_capacity(k_prime);
    for size in 1..=k_prime {
        let groups: Vec<usize> = ranking[..size].iter().map(|r| r.group).collect();
        let columns = stage2_design.columns_of(&groups);
        let fit = fit_ols(&stage2_design, &columns, response)?;
        let criterion = criteria(&fit, columns.len(), p_star, config.psi);
        nested_models.push(NestedModel {
            size,
            labels: groups.iter().map(|&g| stage2_design.group(g).label.clone()).collect(),
            sources: groups.iter().map(|&g| stage2_design.group(g).source).collect(),
            column_labels: columns.iter().map(|&c| stage2_design.column_labels()[c].clone()).collect(),
            groups,
            fit,
            criterion,
            inference: None,
        });
    }

    let pick = |m: &NestedModel| if high_dim { (m.criterion.bic_p, m.criterion.aic_p) } else { (m.criterion.bic, m.criterion.aic) };
    let lower = 1 + argmin_first(nested_models.iter().map(|m| pick(m).0));
    let upper = 1 + argmin_first(nested_models.iter().map(|m| pick(m).1));

    let (a, b) = (lower.min(upper), lower.max(upper));
    for model in &mut nested_models[a - 1..b] {
        let columns = stage2_design.columns_of(&model.groups);
        model.inference = ols_inference(&stage2_design, &columns, response)?.map(|rows| {
            rows.into_iter()
                .map(|row| LabeledCoefficient {
                    term: row
                        .column
                        .map_or_else(|| "(Intercept)".to_string(), |c| stage2_design.column_labels()[c].clone()),
                    estimate: row.estimate,
                    std_error: row.std_error,
                    t_value: row.t_value,
                    p_value: row.p_value,
                })
                .collect()
        });
    }

    Ok(VibimReport {
        n,
        config: config.clone(),
        stage1_importance: stage1,
        screened,
        stage2_groups: stage2_design.n_groups(),
        stage2_columns: p_star,
        stage2_importance: stage2,
        ranking,
        nested_models,
        high_dim,
        lower,
        upper,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedRow {
    pub size: usize,
    pub added: String,
    pub labels: Vec<String>,
    pub bic: f64,
    pub aic: f64,
    pub bic_p: f64,
    pub aic_p: f64,
    pub is_lower: bool,
    pub is_upper: bool,
    pub in_window: bool,
}

/// One row per nested model, in size order.
pub fn nested_model_table(report: &VibimReport) -> Vec<NestedRow> {
    let (a, b) = report.window();
    report
        .nested_models
        .iter()
        .map(|m| NestedRow {
            size: m.size,
            added: m.labels.last().cloned().unwrap_or_default(),
            labels: m.labels.clone(),
            bic: m.criterion.bic,
            aic: m.criterion.aic,
            bic_p: m.criterion.bic_p,
            aic_p: m.criterion.aic_p,
            is_lower: m.size == report.lower,
            is_upper: m.size == report.upper,
            in_window: (a..=b).contains(&m.size),
        })
        .collect()
}
