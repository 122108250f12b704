//! Replicated experiments: the F/G simulation study and the guided simulation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{augment_interactions, encode, EncodingError, GroupSource, GroupedDesign};
use crate::evaluation::{f_and_g, pairs_of};
use crate::regression::{fit_ols, ols_inference, RegressionError};
use crate::rng::{derive_seed, task_rng};
use crate::simgen::{generate, Scenario, SimDesignSpec, SimError};
use crate::solvers::{two_stage, Penalty, PenaltySpec, Tuning};
use crate::vibim::{run_vibim, VibimConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StudyError {
    #[error("replications must be at least 1")]
    NoReplications,
    #[error("invalid study: {0}")]
    Invalid(String),
    #[error("replication {rep}, {method}: {message}")]
    Replication { rep: usize, method: String, message: String },
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Vibim,
    TwoStage { penalty: Penalty },
}

impl Method {
    pub fn all() -> Vec<Method> {
        vec![
            Method::Vibim,
            Method::TwoStage { penalty: Penalty::GroupLasso },
            Method::TwoStage { penalty: Penalty::scad() },
            Method::TwoStage { penalty: Penalty::mcp() },
        ]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Vibim => f.write_str("vibim"),
            Method::TwoStage { penalty } => f.write_str(penalty.short_name()),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vibim" => Ok(Method::Vibim),
            "glasso" => Ok(Method::TwoStage { penalty: Penalty::GroupLasso }),
            "gscad" => Ok(Method::TwoStage { penalty: Penalty::scad() }),
            "gmcp" => Ok(Method::TwoStage { penalty: Penalty::mcp() }),
            _ => Err(format!("unknown method `{s}` (expected vibim, glasso, gscad or gmcp)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub sigma: f64,
    pub reps: usize,
    pub sizes: Vec<usize>,
    pub methods: Vec<Method>,
    pub vibim: VibimConfig,
    /// Stage-1 tuning of the two-stage baselines.
    pub tuning: Tuning,
    pub seed: u64,
}

impl SimulationPlan {
    /// Sizes `true_size - 2 ..= true_size + 2` and all four methods.
    pub fn new(scenario: Scenario, n: usize, p: usize, reps: usize, seed: u64) -> Self {
        let t = scenario.true_size();
        Self {
            scenario,
            n,
            p,
            rho: 0.5,
            sigma: 1.0,
            reps,
            sizes: (t.saturating_sub(2).max(1)..=t + 2).collect(),
            methods: Method::all(),
            vibim: VibimConfig::default(),
            tuning: Tuning::Cv { folds: 10 },
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgCell {
    pub method: String,
    pub size: usize,
    pub mean_f: f64,
    pub mean_g: f64,
    /// Standard errors of the means; absent with a single replication.
    pub se_f: Option<f64>,
    pub se_g: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub plan: SimulationPlan,
    /// Method-major, then ascending size.
    pub cells: Vec<FgCell>,
}

impl SimulationSummary {
    pub fn cell(&self, method: &str, size: usize) -> Option<&FgCell> {
        self.cells.iter().find(|c| c.method == method && c.size == size)
    }
}

fn mean_se(values: &[f64]) -> (f64, Option<f64>) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, Some((var / k).sqrt()))
}

/// Interaction pairs of each requested model size for one method on one dataset.
fn pairs_by_size(
    method: Method,
    design: &GroupedDesign,
    response: &[f64],
    plan: &SimulationPlan,
    seed: u64,
) -> Result<Vec<BTreeSet<(usize, usize)>>, String> {
    match method {
        Method::Vibim => {
            let report = run_vibim(design, response, &plan.vibim).map_err(|e| e.to_string())?;
            Ok(plan.sizes.iter().map(|&s| report.pairs_of_size(s)).collect())
        }
        Method::TwoStage { penalty } => {
            let spec = PenaltySpec::new(penalty);
            let mut rng = task_rng(seed, 0);
            let ts = two_stage(design, response, &spec, plan.tuning, false, &mut rng).map_err(|e| e.to_string())?;
            Ok(plan.sizes.iter().map(|&s| pairs_of(&ts.model_of_size(s))).collect())
        }
    }
}

/// Generates `reps` datasets and scores every method at every size.
/// Replication `r` uses data seed `derive_seed(seed, r)`, so results do not
/// depend on scheduling.
pub fn run_simulation(plan: &SimulationPlan) -> Result<SimulationSummary, StudyError> {
    if plan.reps == 0 {
        return Err(StudyError::NoReplications);
    }
    if plan.methods.is_empty() || plan.sizes.is_empty() || plan.sizes.contains(&0) {
        return Err(StudyError::Invalid("need at least one method and positive model sizes".into()));
    }
    let truth = plan.scenario.true_pairs();
    // per rep, per method, per size: (F, G)
    let per_rep: Vec<Vec<Vec<(f64, f64)>>> = (0..plan.reps)
        .into_par_iter()
        .map(|rep| {
            let data_seed = derive_seed(plan.seed, rep as u64);
            let spec = SimDesignSpec {
                rho: plan.rho,
                sigma: plan.sigma,
                ..SimDesignSpec::new(plan.scenario, plan.n, plan.p, data_seed)
            };
            let data = generate(&spec)?;
            let design = encode(&data.schema, &data.raw)?;
            plan.methods
                .iter()
                .enumerate()
                .map(|(m, &method)| {
                    let pairs = pairs_by_size(method, &design, &data.response, plan, derive_seed(data_seed, 1 + m as u64))
                        .map_err(|message| StudyError::Replication { rep, method: method.to_string(), message })?;
                    Ok(pairs.iter().map(|sel| f_and_g(sel, &truth)).collect())
                })
                .collect()
        })
        .collect::<Result<_, StudyError>>()?;

    let mut cells = Vec::new();
    for (m, method) in plan.methods.iter().enumerate() {
        for (k, &size) in plan.sizes.iter().enumerate() {
            let f: Vec<f64> = per_rep.iter().map(|r| r[m][k].0).collect();
            let g: Vec<f64> = per_rep.iter().map(|r| r[m][k].1).collect();
            let (mean_f, se_f) = mean_se(&f);
            let (mean_g, se_g) = mean_se(&g);
            cells.push(FgCell { method: method.to_string(), size, mean_f, mean_g, se_f, se_g });
        }
    }
    Ok(SimulationSummary { plan: plan.clone(), cells })
}

/// A fitted generating model for the guided simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidedSpec {
    /// Terms of the generating model, over predictor indices.
    pub terms: Vec<GroupSource>,
    /// Terms that must be jointly included and jointly significant.
    pub designated: Vec<GroupSource>,
    /// Size of the VIBIM model examined in each replication.
    pub top_s: usize,
    pub alpha: f64,
    /// Replaces the residual standard deviation of the refit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_override: Option<f64>,
}

impl GuidedSpec {
    /// The contrast model: `term` removed from the generator and one fewer
    /// top-ranked group examined. Designated terms are unchanged.
    pub fn without(&self, term: GroupSource) -> Result<GuidedSpec, StudyError> {
        if !self.terms.contains(&term) {
            return Err(StudyError::Invalid(format!("{term:?} is not a generating term")));
        }
        if self.top_s < 2 {
            return Err(StudyError::Invalid("top_s must be at least 2 for a contrast".into()));
        }
        Ok(GuidedSpec {
            terms: self.terms.iter().copied().filter(|t| *t != term).collect(),
            top_s: self.top_s - 1,
            ..self.clone()
        })
    }

    fn validate(&self, design: &GroupedDesign) -> Result<(), StudyError> {
        let p = design.n_groups();
        let in_range = |s: &GroupSource| match *s {
            GroupSource::Main(i) => i < p,
            GroupSource::Interaction(i, j) => i < j && j < p,
        };
        if self.terms.is_empty() || self.designated.is_empty() {
            return Err(StudyError::Invalid("terms and designated terms must be non-empty".into()));
        }
        if let Some(bad) = self.terms.iter().chain(&self.designated).find(|s| !in_range(s)) {
            return Err(StudyError::Invalid(format!("term {bad:?} does not name predictors of the design")));
        }
        if self.top_s == 0 {
            return Err(StudyError::Invalid("top_s must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(StudyError::Invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let Some(s) = self.sigma_override {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(StudyError::Invalid(format!("sigma_override must be finite and non-negative, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidedOutcome {
    pub reps: usize,
    /// Replications where every designated term is in the top-`s` model.
    pub included: usize,
    /// ... and every coefficient of those terms has p-value below `alpha`.
    pub included_and_significant: usize,
    pub failures: usize,
    pub sigma_hat: f64,
    /// Refit generating coefficients, `(column label, estimate)`, intercept first.
    pub coefficients: Vec<(String, f64)>,
}

fn pairs_in(sources: &[GroupSource]) -> BTreeSet<(usize, usize)> {
    pairs_of(&sources.iter().copied().collect())
}

fn design_columns(design: &GroupedDesign, sources: &[GroupSource]) -> Vec<usize> {
    let groups: Vec<usize> =
        sources.iter().map(|&s| design.group_of_source(s).expect("augmented design holds every term")).collect();
    design.columns_of(&groups)
}

/// Outcome of one replication: `(included, significant)`.
fn guided_rep(
    design: &GroupedDesign,
    response: &[f64],
    spec: &GuidedSpec,
    config: &VibimConfig,
) -> Result<(bool, bool), String> {
    let report = run_vibim(design, response, config).map_err(|e| e.to_string())?;
    let chosen: Vec<GroupSource> = report.ranking.iter().take(spec.top_s).map(|r| r.source).collect();
    if !spec.designated.iter().all(|d| chosen.contains(d)) {
        return Ok((false, false));
    }
    let augmented = augment_interactions(design, &pairs_in(&chosen)).map_err(|e| e.to_string())?;
    let columns = design_columns(&augmented, &chosen);
    let Some(rows) = ols_inference(&augmented, &columns, response).map_err(|e| e.to_string())? else {
        return Ok((true, false));
    };
    let designated_cols: BTreeSet<usize> = design_columns(&augmented, &spec.designated).into_iter().collect();
    let significant = rows
        .iter()
        .filter(|r| r.column.is_some_and(|c| designated_cols.contains(&c)))
        .all(|r| r.p_value < spec.alpha);
    Ok((true, significant))
}

/// Refits the generating model on `(design, response)`, then for each
/// replication simulates `fitted + sigma_hat * e`, reruns VIBIM and checks the
/// designated terms in its top-`s` model. `design` holds main effects only.
pub fn guided_simulation(
    design: &GroupedDesign,
    response: &[f64],
    spec: &GuidedSpec,
    config: &VibimConfig,
    reps: usize,
    seed: u64,
) -> Result<GuidedOutcome, StudyError> {
    if reps == 0 {
        return Err(StudyError::NoReplications);
    }
    if design.groups().iter().any(|g| g.source.is_interaction()) {
        return Err(StudyError::Invalid("design must contain main effects only".into()));
    }
    spec.validate(design)?;
    let generator = augment_interactions(design, &pairs_in(&spec.terms))?;
    let columns = design_columns(&generator, &spec.terms);
    let fit = fit_ols(&generator, &columns, response)?;
    let sigma_hat = match spec.sigma_override {
        Some(s) => s,
        None => fit
            .sigma2_hat
            .map(f64::sqrt)
            .ok_or_else(|| StudyError::Invalid("generating model leaves no residual degrees of freedom".into()))?,
    };
    let n = design.n_rows();
    let fitted: Vec<f64> = (0..n)
        .map(|i| fit.intercept + fit.coefficients.iter().map(|&(c, b)| b * generator.column(c)[i]).sum::<f64>())
        .collect();

    let outcomes: Vec<Option<(bool, bool)>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = task_rng(seed, rep as u64);
            let y: Vec<f64> = fitted.iter().map(|f| f + sigma_hat * rng.sample::<f64, _>(StandardNormal)).collect();
            guided_rep(design, &y, spec, config).ok()
        })
        .collect();

    let ok: Vec<(bool, bool)> = outcomes.iter().flatten().copied().collect();
    let mut coefficients = vec![("(Intercept)".to_string(), fit.intercept)];
    coefficients.extend(fit.coefficients.iter().map(|&(c, b)| (generator.column_labels()[c].clone(), b)));
    Ok(GuidedOutcome {
        reps,
        included: ok.iter().filter(|o| o.0).count(),
        included_and_significant: ok.iter().filter(|o| o.0 && o.1).count(),
        failures: reps - ok.len(),
        sigma_hat,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::all() {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("lasso".parse::<Method>().is_err());
    }

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_se(&[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(m, 0.5);
        // sd = sqrt(1/3), se = sd / 2
        assert!((se.unwrap() - (1.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_se(&[0.7]), (0.7, None));
    }

    #[test]
    fn single_rep_simulation_has_no_standard_errors() {
        let mut plan = SimulationPlan::new(Scenario::Ex1I, 100, 12, 1, 3);
        plan.methods = vec![Method::Vibim];
        plan.sizes = vec![7];
        let s = run_simulation(&plan).unwrap();
        assert_eq!(s.cells.len(), 1);
        assert!(s.cells[0].se_f.is_none() && s.cells[0].se_g.is_none());
        assert!((0.0..=1.0).contains(&s.cells[0].mean_f));
    }

    #[test]
    fn zero_reps_rejected() {
        let plan = SimulationPlan::new(Scenario::Ex1I, 100, 12, 0, 3);
        assert_eq!(run_simulation(&plan).unwrap_err(), StudyError::NoReplications);
    }
}
