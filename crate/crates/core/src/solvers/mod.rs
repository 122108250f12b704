//! Group-penalized least-squares paths (group LASSO, group SCAD, group MCP)
//! fitted by group coordinate descent with warm starts.
//!
//! The penalized problem is
//!
//! ```text
//! (1/2n) || y_c - sum_g Z_g b_g ||^2 + sum_g P(||b_g||; lambda * sqrt(|I_g|))
//! ```
//!
//! where `Z_g` is the centered block of group `g`. With standardization on,
//! each block is re-expressed in an orthonormal basis (`Z_g'Z_g = n I`) so the
//! block update is a closed-form radial threshold; coefficients are mapped back
//! to the original column scale afterwards. Without standardization, blocks are
//! updated by a majorization step with curvature equal to the block's largest
//! Gram eigenvalue.

mod select;

pub use select::{select_by_bic, select_by_cv, two_stage, Selection, TwoStage, Tuning};

use std::collections::BTreeSet;
use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::GroupedDesign;
use crate::linalg::{dot, norm, PivotedQr};
use crate::regression::{validate_response, RegressionError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("every design column is constant")]
    AllConstantDesign,
    #[error("design has no groups")]
    EmptyDesign,
    #[error("invalid penalty specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Response(#[from] RegressionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Penalty {
    GroupLasso,
    GroupScad { a: f64 },
    GroupMcp { gamma: f64 },
}

impl Penalty {
    pub const SCAD_DEFAULT_A: f64 = 3.7;
    pub const MCP_DEFAULT_GAMMA: f64 = 3.0;

    pub fn scad() -> Self {
        Penalty::GroupScad { a: Self::SCAD_DEFAULT_A }
    }

    pub fn mcp() -> Self {
        Penalty::GroupMcp { gamma: Self::MCP_DEFAULT_GAMMA }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            Penalty::GroupLasso => "glasso",
            Penalty::GroupScad { .. } => "gscad",
            Penalty::GroupMcp { .. } => "gmcp",
        }
    }

    /// Penalty value at block norm `t` with group-level tuning `lam`.
    pub fn value(&self, t: f64, lam: f64) -> f64 {
        match *self {
            Penalty::GroupLasso => lam * t,
            Penalty::GroupMcp { gamma } => {
                if t <= gamma * lam {
                    lam * t - t * t / (2.0 * gamma)
                } else {
                    0.5 * gamma * lam * lam
                }
            }
            Penalty::GroupScad { a } => {
                if t <= lam {
                    lam * t
                } else if t <= a * lam {
                    (2.0 * a * lam * t - t * t - lam * lam) / (2.0 * (a - 1.0))
                } else {
                    0.5 * lam * lam * (a + 1.0)
                }
            }
        }
    }

    /// Minimizer over `t >= 0` of `(L/2)(t - s)^2 + P(t; lam)` for `s >= 0`.
    ///
    /// With `L = 1` this is the usual soft, firm (MCP) and SCAD threshold.
    pub fn threshold(&self, s: f64, lam: f64, curvature: f64) -> f64 {
        let l = curvature;
        // `s <= lam/L` kills the block for all three penalties; the small
        // slack keeps a block at exactly lambda_max inactive despite rounding.
        if s * l <= lam * (1.0 + 4.0 * f64::EPSILON) {
            return 0.0;
        }
        match *self {
            Penalty::GroupLasso => s - lam / l,
            Penalty::GroupMcp { gamma } => {
                if s > gamma * lam {
                    s
                } else {
                    ((l * s - lam) / (l - 1.0 / gamma)).min(gamma * lam)
                }
            }
            Penalty::GroupScad { a } => {
                let candidates = [
                    (s - lam / l).clamp(0.0, lam),
                    ((l * s * (a - 1.0) - a * lam) / (l * (a - 1.0) - 1.0)).clamp(lam, a * lam),
                    s.max(a * lam),
                ];
                let obj = |t: f64| 0.5 * l * (t - s).powi(2) + self.value(t, lam);
                candidates.into_iter().fold((0.0, obj(0.0)), |best, t| {
                    let v = obj(t);
                    if v < best.1 {
                        (t, v)
                    } else {
                        best
                    }
                }).0
            }
        }
    }

    /// Smallest block curvature for which the block subproblem stays convex.
    fn min_curvature(&self) -> f64 {
        match *self {
            Penalty::GroupLasso => 0.0,
            Penalty::GroupMcp { gamma } => 1.0 / gamma,
            Penalty::GroupScad { a } => 1.0 / (a - 1.0),
        }
    }

    fn validate(&self) -> Result<(), SolverError> {
        match *self {
            Penalty::GroupScad { a } if !(a > 2.0) => Err(SolverError::InvalidSpec(format!("SCAD needs a > 2, got {a}"))),
            Penalty::GroupMcp { gamma } if !(gamma > 1.0) => {
                Err(SolverError::InvalidSpec(format!("MCP needs gamma > 1, got {gamma}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaGrid {
    /// Log-equispaced from `lambda_max` down to the default `lambda_min`.
    Auto { n_lambda: usize },
    /// Strictly descending, nonnegative values.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub penalty: Penalty,
    pub lambda_grid: LambdaGrid,
    pub standardize: bool,
    pub max_sweeps: usize,
    pub tol: f64,
    /// Stop the path after the first step whose active column count reaches `n - 1`.
    pub stop_at_saturation: bool,
    pub record_objective: bool,
}

impl PenaltySpec {
    pub fn new(penalty: Penalty) -> Self {
        Self {
            penalty,
            lambda_grid: LambdaGrid::Auto { n_lambda: 100 },
            standardize: true,
            max_sweeps: 10_000,
            tol: 1e-7,
            stop_at_saturation: true,
            record_objective: false,
        }
    }

    pub fn with_grid(mut self, grid: LambdaGrid) -> Self {
        self.lambda_grid = grid;
        self
    }

    /// The three families used to harvest candidate models.
    pub fn default_trio() -> Vec<PenaltySpec> {
        vec![Self::new(Penalty::GroupLasso), Self::new(Penalty::scad()), Self::new(Penalty::mcp())]
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        self.penalty.validate()?;
        match &self.lambda_grid {
            LambdaGrid::Auto { n_lambda: 0 } => Err(SolverError::InvalidSpec("n_lambda must be positive".into())),
            LambdaGrid::Explicit(g) if g.is_empty() => Err(SolverError::InvalidSpec("empty lambda grid".into())),
            LambdaGrid::Explicit(g) if g.iter().any(|l| !l.is_finite() || *l < 0.0) => {
                Err(SolverError::InvalidSpec("lambda values must be finite and nonnegative".into()))
            }
            LambdaGrid::Explicit(g) if g.windows(2).any(|w| w[1] >= w[0]) => {
                Err(SolverError::InvalidSpec("lambda grid must be strictly descending".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStep {
    pub lambda: f64,
    /// Coefficients on the original column scale, length `p*`.
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub active_groups: BTreeSet<usize>,
    pub converged: bool,
    pub iterations: usize,
    /// Coefficients in the solver's working basis (see [`WorkingDesign`]).
    #[serde(skip)]
    pub working_beta: Vec<f64>,
    /// Penalized objective after every sweep, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_trace: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverPath {
    pub penalty: Penalty,
    pub steps: Vec<SolverStep>,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub working: Range<usize>,
    pub original: Range<usize>,
    /// `|original| x |working|` column-major map from working to original coefficients.
    pub transform: Vec<f64>,
    /// `sqrt(|I_g|)`
    pub weight: f64,
    pub curvature: f64,
}

/// Centered (and optionally block-orthonormalized) design the solver iterates on.
#[derive(Debug, Clone)]
pub struct WorkingDesign {
    pub n: usize,
    /// Column-major `n x working_cols`.
    pub z: Vec<f64>,
    pub blocks: Vec<Block>,
    pub column_means: Vec<f64>,
    pub p_star: usize,
}

impl WorkingDesign {
    pub fn new(design: &GroupedDesign, standardize: bool) -> Result<Self, SolverError> {
        if design.n_groups() == 0 {
            return Err(SolverError::EmptyDesign);
        }
        let n = design.n_rows();
        let nf = n as f64;
        let column_means: Vec<f64> =
            (0..design.n_cols()).map(|j| design.column(j).iter().sum::<f64>() / nf).collect();
        let mut z = Vec::new();
        let mut blocks = Vec::with_capacity(design.n_groups());
        let mut width = 0;

        for group in design.groups() {
            let k = group.size();
            let mut xc = DMatrix::<f64>::zeros(n, k);
            for (a, c) in group.columns.clone().enumerate() {
                if design.is_constant(c) {
                    continue;
                }
                for (dst, v) in xc.column_mut(a).iter_mut().zip(design.column(c)) {
                    *dst = v - column_means[c];
                }
            }
            let gram = xc.transpose() * &xc / nf;
            let eig = SymmetricEigen::new(gram);
            let top = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
            let keep: Vec<usize> =
                (0..k).filter(|&i| top > 0.0 && eig.eigenvalues[i] > 1e-10 * top.max(1e-300)).collect();

            let (block_z, transform, curvature) = if standardize {
                let mut t = DMatrix::<f64>::zeros(k, keep.len());
                for (dst, &i) in keep.iter().enumerate() {
                    let scale = 1.0 / eig.eigenvalues[i].sqrt();
                    t.set_column(dst, &(eig.eigenvectors.column(i) * scale));
                }
                (&xc * &t, t, 1.0)
            } else {
                // identity on the non-constant columns
                let live: Vec<usize> = group
                    .columns
                    .clone()
                    .enumerate()
                    .filter(|&(_, c)| !design.is_constant(c))
                    .map(|(a, _)| a)
                    .collect();
                let mut t = DMatrix::<f64>::zeros(k, if keep.is_empty() { 0 } else { live.len() });
                if !keep.is_empty() {
                    for (dst, &a) in live.iter().enumerate() {
                        t[(a, dst)] = 1.0;
                    }
                }
                (&xc * &t, t, top)
            };
            let w = transform.ncols();
            z.extend_from_slice(block_z.as_slice());
            blocks.push(Block {
                working: width..width + w,
                original: group.columns.clone(),
                transform: transform.as_slice().to_vec(),
                weight: (k as f64).sqrt(),
                curvature,
            });
            width += w;
        }
        if width == 0 {
            return Err(SolverError::AllConstantDesign);
        }
        Ok(Self { n, z, blocks, column_means, p_star: design.n_cols() })
    }

    pub fn working_cols(&self) -> usize {
        self.z.len() / self.n.max(1)
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.z[j * self.n..(j + 1) * self.n]
    }

    /// `Z_g' r / n` for one block.
    pub fn block_gradient(&self, g: usize, r: &[f64]) -> Vec<f64> {
        let nf = self.n as f64;
        self.blocks[g].working.clone().map(|j| dot(self.column(j), r) / nf).collect()
    }

    /// Smallest lambda at which every block is zero.
    pub fn lambda_max(&self, yc: &[f64]) -> f64 {
        (0..self.blocks.len())
            .filter(|&g| !self.blocks[g].working.is_empty())
            .map(|g| {
                let b = &self.blocks[g];
                norm(&self.block_gradient(g, yc)) / b.weight
            })
            .fold(0.0, f64::max)
    }

    fn to_original(&self, working_beta: &[f64], y_mean: f64) -> (Vec<f64>, f64) {
        let mut beta = vec![0.0; self.p_star];
        for b in &self.blocks {
            let k = b.original.len();
            for (wj, j) in b.working.clone().enumerate() {
                let coef = working_beta[j];
                if coef == 0.0 {
                    continue;
                }
                for a in 0..k {
                    beta[b.original.start + a] += b.transform[wj * k + a] * coef;
                }
            }
        }
        let intercept = y_mean - beta.iter().zip(&self.column_means).map(|(b, m)| b * m).sum::<f64>();
        (beta, intercept)
    }

    /// Penalized objective at `working_beta` with residual `r`.
    pub fn objective(&self, penalty: Penalty, lambda: f64, working_beta: &[f64], r: &[f64]) -> f64 {
        let loss = r.iter().map(|v| v * v).sum::<f64>() / (2.0 * self.n as f64);
        let pen: f64 = self
            .blocks
            .iter()
            .map(|b| penalty.value(norm(&working_beta[b.working.clone()]), lambda * b.weight))
            .sum();
        loss + pen
    }
}

fn centered_response(response: &[f64]) -> (Vec<f64>, f64) {
    let mean = response.iter().sum::<f64>() / response.len() as f64;
    (response.iter().map(|v| v - mean).collect(), mean)
}

/// `n_lambda` values log-equispaced from `lambda_max` to `ratio * lambda_max`,
/// with `ratio = 1e-4` when `n > p*` and `0.05` otherwise.
pub fn lambda_grid(design: &GroupedDesign, response: &[f64], n_lambda: usize) -> Result<Vec<f64>, SolverError> {
    validate_response(design.n_rows(), response)?;
    let working = WorkingDesign::new(design, true)?;
    let (yc, _) = centered_response(response);
    Ok(grid_from_max(working.lambda_max(&yc), design.n_rows(), design.n_cols(), n_lambda))
}

fn grid_from_max(lambda_max: f64, n: usize, p_star: usize, n_lambda: usize) -> Vec<f64> {
    let ratio = if n > p_star { 1e-4 } else { 0.05 };
    if n_lambda == 1 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..n_lambda)
        .map(|i| {
            if i == 0 {
                lambda_max
            } else if i == n_lambda - 1 {
                lambda_max * ratio
            } else {
                (hi + (lo - hi) * i as f64 / (n_lambda - 1) as f64).exp()
            }
        })
        .collect()
}

/// Resolves a `PenaltySpec` grid against this design (standardized lambda scale).
pub fn resolve_grid(design: &GroupedDesign, response: &[f64], spec: &PenaltySpec) -> Result<Vec<f64>, SolverError> {
    match &spec.lambda_grid {
        LambdaGrid::Auto { n_lambda } => {
            let working = WorkingDesign::new(design, spec.standardize)?;
            let (yc, _) = centered_response(response);
            Ok(grid_from_max(working.lambda_max(&yc), design.n_rows(), design.n_cols(), *n_lambda))
        }
        LambdaGrid::Explicit(g) => Ok(g.clone()),
    }
}

struct CdState<'a> {
    wd: &'a WorkingDesign,
    penalty: Penalty,
    beta: Vec<f64>,
    r: Vec<f64>,
    yc: Vec<f64>,
    curvature: Vec<f64>,
}

const ANDERSON_DEPTH: usize = 5;

impl CdState<'_> {
    /// One pass over `groups`; returns the largest coefficient change.
    fn sweep(&mut self, groups: impl Iterator<Item = usize>, lambda: f64) -> f64 {
        let nf = self.wd.n as f64;
        let mut max_change: f64 = 0.0;
        let mut grad = Vec::new();
        for g in groups {
            let block = &self.wd.blocks[g];
            if block.working.is_empty() {
                continue;
            }
            let l = self.curvature[g];
            grad.clear();
            for j in block.working.clone() {
                grad.push(dot(self.wd.column(j), &self.r) / nf / l + self.beta[j]);
            }
            let s = norm(&grad);
            let t = self.penalty.threshold(s, lambda * block.weight, l);
            let scale = if s > 0.0 { t / s } else { 0.0 };
            for (idx, j) in block.working.clone().enumerate() {
                let new = grad[idx] * scale;
                let delta = new - self.beta[j];
                if delta != 0.0 {
                    for (ri, zi) in self.r.iter_mut().zip(self.wd.column(j)) {
                        *ri -= delta * zi;
                    }
                    self.beta[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
        }
        max_change
    }

    /// Anderson extrapolation from successive active-set iterates, restricted
    /// to `cols`. The extrapolated point replaces the current one only when it
    /// strictly lowers the penalized objective.
    fn anderson_step(&mut self, history: &[Vec<f64>], cols: &[usize], lambda: f64) -> bool {
        let m = history.len() - 1;
        let diffs: Vec<Vec<f64>> =
            history.windows(2).map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect()).collect();
        let gram = DMatrix::from_fn(m, m, |i, j| dot(&diffs[i], &diffs[j]));
        let ridge = 1e-10 * gram.trace().max(f64::MIN_POSITIVE);
        let Some(chol) = (gram + DMatrix::identity(m, m) * ridge).cholesky() else {
            return false;
        };
        let z = chol.solve(&nalgebra::DVector::from_element(m, 1.0));
        let total: f64 = z.iter().sum();
        if !(total.is_finite() && total.abs() > 0.0) {
            return false;
        }
        let mut beta = self.beta.clone();
        for (k, &j) in cols.iter().enumerate() {
            beta[j] = (0..m).map(|i| z[i] / total * history[i + 1][k]).sum();
        }
        let mut r = self.yc.clone();
        for &j in cols {
            let b = beta[j];
            if b != 0.0 {
                for (ri, zi) in r.iter_mut().zip(self.wd.column(j)) {
                    *ri -= b * zi;
                }
            }
        }
        let old = self.wd.objective(self.penalty, lambda, &self.beta, &self.r);
        let new = self.wd.objective(self.penalty, lambda, &beta, &r);
        if new < old {
            self.beta = beta;
            self.r = r;
            true
        } else {
            false
        }
    }

    fn block_active(&self, g: usize) -> bool {
        self.beta[self.wd.blocks[g].working.clone()].iter().any(|&b| b != 0.0)
    }

    /// Jumps straight to the least-squares optimum over the active blocks whose
    /// norm lies where the penalty is constant (beyond `a lambda` or
    /// `gamma lambda`). Kept only if every such block stays in that region and
    /// the loss does not increase, so the objective never goes up.
    fn flat_region_solve(&mut self, active: &[usize], lambda: f64) -> bool {
        let flat_from = match self.penalty {
            Penalty::GroupLasso => return false,
            Penalty::GroupScad { a } => a,
            Penalty::GroupMcp { gamma } => gamma,
        };
        let blocks = &self.wd.blocks;
        let flat: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&g| norm(&self.beta[blocks[g].working.clone()]) > flat_from * lambda * blocks[g].weight)
            .collect();
        let cols: Vec<usize> = flat.iter().flat_map(|&g| blocks[g].working.clone()).collect();
        if cols.is_empty() || cols.len() >= self.wd.n {
            return false;
        }
        let n = self.wd.n;
        let mut target = self.r.clone();
        let mut a = Vec::with_capacity(n * cols.len());
        for &j in &cols {
            let z = self.wd.column(j);
            for (t, zi) in target.iter_mut().zip(z) {
                *t += self.beta[j] * zi;
            }
            a.extend_from_slice(z);
        }
        let (sol, rss) = PivotedQr::new(a, n, cols.len()).solve(&target);
        let old_rss: f64 = self.r.iter().map(|v| v * v).sum();
        if !(rss <= old_rss) {
            return false;
        }
        let mut offset = 0;
        for &g in &flat {
            let w = blocks[g].working.len();
            if norm(&sol[offset..offset + w]) <= flat_from * lambda * blocks[g].weight {
                return false;
            }
            offset += w;
        }
        for (&j, &b) in cols.iter().zip(&sol) {
            let delta = b - self.beta[j];
            if delta != 0.0 {
                for (ri, zi) in self.r.iter_mut().zip(self.wd.column(j)) {
                    *ri -= delta * zi;
                }
                self.beta[j] = b;
            }
        }
        true
    }
}

/// Fits the whole regularization path with warm starts.
pub fn fit_path(design: &GroupedDesign, response: &[f64], spec: &PenaltySpec) -> Result<SolverPath, SolverError> {
    spec.validate()?;
    validate_response(design.n_rows(), response)?;
    let wd = WorkingDesign::new(design, spec.standardize)?;
    let grid = resolve_grid(design, response, spec)?;
    Ok(fit_path_on(&wd, response, spec, &grid))
}

pub(crate) fn fit_path_on(wd: &WorkingDesign, response: &[f64], spec: &PenaltySpec, grid: &[f64]) -> SolverPath {
    let (yc, y_mean) = centered_response(response);
    let floor = spec.penalty.min_curvature() * 1.000_001;
    let curvature = wd.blocks.iter().map(|b| b.curvature.max(floor)).collect();
    let mut state =
        CdState { wd, penalty: spec.penalty, beta: vec![0.0; wd.working_cols()], r: yc.clone(), yc, curvature };
    let all = 0..wd.blocks.len();
    let mut steps = Vec::with_capacity(grid.len());

    for &lambda in grid {
        let mut sweeps = 0;
        let mut converged = false;
        let mut trace = spec.record_objective.then(Vec::new);
        let record = |st: &CdState, trace: &mut Option<Vec<f64>>| {
            if let Some(t) = trace.as_mut() {
                t.push(wd.objective(spec.penalty, lambda, &st.beta, &st.r));
            }
        };
        while sweeps < spec.max_sweeps {
            let change = state.sweep(all.clone(), lambda);
            sweeps += 1;
            record(&state, &mut trace);
            let tol = spec.tol * (1.0 + state.beta.iter().fold(0.0f64, |m, b| m.max(b.abs())));
            if change < tol {
                converged = true;
                break;
            }
            let active: Vec<usize> = all.clone().filter(|&g| state.block_active(g)).collect();
            let active_cols: Vec<usize> = active.iter().flat_map(|&g| wd.blocks[g].working.clone()).collect();
            let snapshot = |st: &CdState| active_cols.iter().map(|&j| st.beta[j]).collect::<Vec<f64>>();
            let mut history = vec![snapshot(&state)];
            let mut inner: usize = 0;
            while sweeps < spec.max_sweeps {
                let change = state.sweep(active.iter().copied(), lambda);
                sweeps += 1;
                inner += 1;
                record(&state, &mut trace);
                let tol = spec.tol * (1.0 + state.beta.iter().fold(0.0f64, |m, b| m.max(b.abs())));
                if change < tol {
                    break;
                }
                // slow linear convergence on correlated blocks; retry at doubling intervals
                if inner >= 20 && inner.is_power_of_two() && state.flat_region_solve(&active, lambda) {
                    record(&state, &mut trace);
                    history.clear();
                }
                history.push(snapshot(&state));
                if history.len() > ANDERSON_DEPTH + 1 {
                    history.remove(0);
                }
                if history.len() > ANDERSON_DEPTH && inner >= 10 {
                    if state.anderson_step(&history, &active_cols, lambda) {
                        record(&state, &mut trace);
                    }
                    history.clear();
                    history.push(snapshot(&state));
                }
            }
        }

        let (beta, intercept) = wd.to_original(&state.beta, y_mean);
        let active_groups: BTreeSet<usize> = all.clone().filter(|&g| state.block_active(g)).collect();
        let active_cols: usize = active_groups.iter().map(|&g| wd.blocks[g].working.len()).sum();
        steps.push(SolverStep {
            lambda,
            beta,
            intercept,
            active_groups,
            converged,
            iterations: sweeps,
            working_beta: state.beta.clone(),
            objective_trace: trace,
        });
        if spec.stop_at_saturation && active_cols + 1 >= wd.n {
            break;
        }
    }
    SolverPath { penalty: spec.penalty, steps }
}
