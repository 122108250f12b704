use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;
use vibim::encoding::{all_pairs, GroupedDesign};
use vibim::evaluation::{estimate_sigma, ConstantSelector, Selector, TwoStageSelector, VibimSelector};
use vibim::io::{format_float, load_toml, nested_models_tsv, to_canonical_json};
use vibim::rng::derive_seed;
use vibim::study::{GuidedOutcome, Method, SimulationPlan};
use vibim::{
    augment_interactions, encode, fit_path, guided_simulation, load_dataset, pivs, run_simulation, run_vibim, sivs,
    soil_importance, DataSchemaFile, GroupSource, GuidedSpec, ImportanceVector, LambdaGrid, LoadedDataset, PenaltySpec,
    PredictorSchema, Scenario, Tuning, VibimConfig, VibimReport,
};

use crate::args::{Cli, Command, DataArgs, Format, TuningArg};
use crate::tables::{fixed, p_value, with_se, Table};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<vibim::Error> for CliError {
    fn from(e: vibim::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

fn lib<E: Into<vibim::Error>>(e: E) -> CliError {
    CliError::from(e.into())
}

struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    fn table(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        self.write(name, &table.to_tsv())
    }

    fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, &to_canonical_json(value).map_err(lib)?)
    }
}

fn load(data: &DataArgs) -> Result<(LoadedDataset, GroupedDesign), CliError> {
    let file = DataSchemaFile::load(&data.schema).map_err(lib)?;
    let loaded = load_dataset(&data.data, &file).map_err(lib)?;
    let design = encode(&loaded.schema, &loaded.raw).map_err(lib)?;
    Ok((loaded, design))
}

fn load_config(path: &Option<PathBuf>) -> Result<VibimConfig, CliError> {
    let config: VibimConfig = match path {
        Some(p) => load_toml(p).map_err(lib)?,
        None => VibimConfig::default(),
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn tuning(arg: TuningArg, folds: usize) -> Tuning {
    match arg {
        TuningArg::Cv => Tuning::Cv { folds },
        TuningArg::Bic => Tuning::Bic,
    }
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let seed = match (cli.seed, cli.command.is_randomized()) {
        (Some(s), _) => s,
        (None, false) => 0,
        (None, true) => return Err(CliError::Usage("--seed is required for this subcommand".into())),
    };
    let mut out = Output::create(&cli.out)?;
    match &cli.command {
        Command::Vibim { data, config } => cmd_vibim(data, config, cli.format, &mut out)?,
        Command::Simulate { scenario, n, p, reps, methods, sizes, rho, sigma, tuning: t, folds, config } => {
            let scenario: Scenario = scenario.parse().map_err(|e: vibim::SimError| CliError::Usage(e.to_string()))?;
            let methods = methods
                .iter()
                .map(|m| m.parse::<Method>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(CliError::Usage)?;
            if *reps == 0 {
                return Err(CliError::Usage("--reps must be at least 1".into()));
            }
            let mut plan = SimulationPlan::new(scenario, *n, *p, *reps, seed);
            plan.methods = methods;
            if !sizes.is_empty() {
                plan.sizes = sizes.clone();
            }
            plan.rho = *rho;
            plan.sigma = *sigma;
            plan.tuning = tuning(*t, *folds);
            plan.vibim = load_config(config)?;
            cmd_simulate(&plan, cli.format, &mut out)?
        }
        Command::Stability { data, selectors, taus, fractions, reps, tuning: t, folds, config } => {
            if *reps == 0 {
                return Err(CliError::Usage("--reps must be at least 1".into()));
            }
            let config = load_config(config)?;
            let selectors = selectors
                .iter()
                .map(|s| parse_selector(s, &config, tuning(*t, *folds)))
                .collect::<Result<Vec<_>, _>>()?;
            cmd_stability(data, &selectors, taus, fractions, *reps, &config, seed, cli.format, &mut out)?
        }
        Command::GuidedSim { data, spec, reps, config } => {
            if *reps == 0 {
                return Err(CliError::Usage("--reps must be at least 1".into()));
            }
            cmd_guided(data, spec, *reps, &load_config(config)?, seed, cli.format, &mut out)?
        }
        Command::FitPath { data, penalty, n_lambda, no_standardize, interactions } => {
            cmd_fit_path(data, penalty, *n_lambda, !no_standardize, *interactions, cli.format, &mut out)?
        }
        Command::Soil { data, interactions, config } => {
            cmd_soil(data, *interactions, &load_config(config)?, cli.format, &mut out)?
        }
    }
    Ok(out.written)
}

fn importance_table(imp: &ImportanceVector) -> Table {
    let mut t = Table::new(["rank", "variable", "importance"]);
    for (k, g) in imp.ranking().into_iter().enumerate() {
        let e = imp.entries.iter().find(|e| e.group == g).expect("ranked group has an entry");
        t.push(vec![(k + 1).to_string(), e.label.clone(), fixed(e.score, 3)]);
    }
    t
}

fn nested_table(report: &VibimReport) -> Table {
    let mut t = Table::new(["model", "added", "bic", "aic", "bic_p", "aic_p", "window"]);
    for row in vibim::vibim::nested_model_table(report) {
        let mark = match (row.is_lower, row.is_upper) {
            (true, true) => "L,U",
            (true, false) => "L",
            (false, true) => "U",
            _ if row.in_window => "*",
            _ => "",
        };
        t.push(vec![
            format!("SOIL_{}", row.size),
            row.added,
            fixed(row.bic, 3),
            fixed(row.aic, 3),
            fixed(row.bic_p, 3),
            fixed(row.aic_p, 3),
            mark.into(),
        ]);
    }
    t
}

fn coefficient_table(report: &VibimReport) -> Table {
    let mut t = Table::new(["model", "term", "estimate", "std_error", "t_value", "p_value"]);
    for m in report.plausible_models() {
        match &m.inference {
            Some(rows) => {
                for c in rows {
                    t.push(vec![
                        format!("SOIL_{}", m.size),
                        c.term.clone(),
                        fixed(c.estimate, 4),
                        fixed(c.std_error, 4),
                        fixed(c.t_value, 3),
                        p_value(c.p_value),
                    ]);
                }
            }
            None => t.push(vec![format!("SOIL_{}", m.size), "(not estimable)".into(), "".into(), "".into(), "".into(), "".into()]),
        }
    }
    t
}

fn cmd_vibim(data: &DataArgs, config: &Option<PathBuf>, format: Format, out: &mut Output) -> Result<(), CliError> {
    let config = load_config(config)?;
    let (loaded, design) = load(data)?;
    let report = run_vibim(&design, &loaded.response, &config).map_err(lib)?;
    match format {
        Format::Json => out.json("report.json", &report)?,
        Format::Tsv => out.write("report.tsv", &nested_models_tsv(&report))?,
    }
    let stage1 = importance_table(&report.stage1_importance);
    let stage2 = importance_table(&report.stage2_importance);
    let nested = nested_table(&report);
    let coefs = coefficient_table(&report);
    out.table("stage1_importance.tsv", &stage1)?;
    out.table("stage2_importance.tsv", &stage2)?;
    out.table("nested_models.tsv", &nested)?;
    out.table("coefficients.tsv", &coefs)?;
    println!(
        "{} rows read, {} dropped; {} of {} predictors screened; window SOIL_{}..SOIL_{}{}",
        loaded.rows_read,
        loaded.rows_dropped,
        report.screened.len(),
        design.n_groups(),
        report.window().0,
        report.window().1,
        if report.high_dim { " (high-dimensional criteria)" } else { "" }
    );
    println!("\nStage 1 importance\n{}", stage1.to_text());
    println!("Stage 2 importance\n{}", stage2.to_text());
    println!("Nested models\n{}", nested.to_text());
    println!("Coefficients of plausible models\n{}", coefs.to_text());
    Ok(())
}

fn cmd_simulate(plan: &SimulationPlan, format: Format, out: &mut Output) -> Result<(), CliError> {
    let summary = run_simulation(plan).map_err(lib)?;
    let mut tsv = Table::new(["method", "size", "F", "F_se", "G", "G_se"]);
    let se = |v: Option<f64>| v.map(format_float).unwrap_or_default();
    for c in &summary.cells {
        tsv.push(vec![c.method.clone(), c.size.to_string(), format_float(c.mean_f), se(c.se_f), format_float(c.mean_g), se(c.se_g)]);
    }
    // one row per method and measure, one column per size
    let mut header = vec!["method".to_string(), "measure".to_string()];
    header.extend(plan.sizes.iter().map(|s| format!("M_({s})")));
    let mut display = Table::new(header);
    for m in &plan.methods {
        let name = m.to_string();
        for measure in ["F", "G"] {
            let mut row = vec![name.clone(), measure.to_string()];
            for &s in &plan.sizes {
                let c = summary.cell(&name, s).expect("every method and size is scored");
                row.push(if measure == "F" { with_se(c.mean_f, c.se_f) } else { with_se(c.mean_g, c.se_g) });
            }
            display.push(row);
        }
    }
    match format {
        Format::Json => out.json("fg_summary.json", &summary)?,
        Format::Tsv => out.table("fg_summary.tsv", &tsv)?,
    }
    out.table("fg_table.tsv", &display)?;
    println!(
        "{} n={} p={} reps={} (standard errors in parentheses)\n{}",
        plan.scenario,
        plan.n,
        plan.p,
        plan.reps,
        display.to_text()
    );
    Ok(())
}

fn parse_selector(text: &str, config: &VibimConfig, tuning: Tuning) -> Result<Box<dyn Selector>, CliError> {
    let (name, size) = match text.split_once(':') {
        Some((n, s)) => {
            let size: usize =
                s.parse().map_err(|_| CliError::Usage(format!("selector `{text}`: size must be a positive integer")))?;
            if size == 0 {
                return Err(CliError::Usage(format!("selector `{text}`: size must be positive")));
            }
            (n, Some(size))
        }
        None => (text, None),
    };
    if name == "constant" {
        return Ok(Box::new(ConstantSelector(BTreeSet::new())));
    }
    match (name.parse::<Method>().map_err(CliError::Usage)?, size) {
        (Method::Vibim, Some(size)) => Ok(Box::new(VibimSelector { config: config.clone(), size })),
        (Method::Vibim, None) => Err(CliError::Usage("the vibim selector needs a size, e.g. vibim:7".into())),
        (Method::TwoStage { penalty }, size) => {
            Ok(Box::new(TwoStageSelector { spec: PenaltySpec::new(penalty), tuning, size }))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_stability(
    data: &DataArgs,
    selectors: &[Box<dyn Selector>],
    taus: &[f64],
    fractions: &[f64],
    reps: usize,
    config: &VibimConfig,
    seed: u64,
    format: Format,
    out: &mut Output,
) -> Result<(), CliError> {
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(CliError::Usage(format!("tau must be positive, got {t}")));
    }
    if let Some(f) = fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(CliError::Usage(format!("fraction must lie in [0, 1), got {f}")));
    }
    let (loaded, design) = load(data)?;
    let y = &loaded.response;
    let sigma_hat = estimate_sigma(&design, y, config).map_err(CliError::Numerical)?;

    let mut header = vec!["method".to_string()];
    header.extend(taus.iter().map(|t| format!("PIVS(tau={t})")));
    header.extend(fractions.iter().map(|f| format!("SIVS({f})")));
    let mut table = Table::new(header);
    let mut scores = Vec::new();
    for sel in selectors {
        let baseline = sel.select(&design, y, seed).map_err(CliError::Numerical)?;
        let mut row = vec![sel.name()];
        for &tau in taus {
            let s = pivs(sel.as_ref(), &design, y, &baseline, sigma_hat, tau, reps, derive_seed(seed, 1)).map_err(lib)?;
            row.push(fixed(s.value, 3));
            scores.push((sel.name(), "pivs", s));
        }
        for &f in fractions {
            let s = sivs(sel.as_ref(), &design, y, &baseline, f, reps, derive_seed(seed, 2)).map_err(lib)?;
            row.push(fixed(s.value, 3));
            scores.push((sel.name(), "sivs", s));
        }
        table.push(row);
    }
    match format {
        Format::Json => {
            #[derive(serde::Serialize)]
            struct Entry<'a> {
                method: &'a str,
                measure: &'a str,
                score: &'a vibim::StabilityScore,
            }
            let entries: Vec<Entry> =
                scores.iter().map(|(m, k, s)| Entry { method: m, measure: k, score: s }).collect();
            out.json("stability.json", &entries)?
        }
        Format::Tsv => out.table("stability.tsv", &table)?,
    }
    println!("noise scale sigma_hat = {}\n{}", fixed(sigma_hat, 4), table.to_text());
    Ok(())
}

/// Guided simulation spec as written by users: terms by predictor name,
/// interactions as `A*B`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GuidedFile {
    terms: Vec<String>,
    designated: Vec<String>,
    top_s: usize,
    #[serde(default = "default_alpha")]
    alpha: f64,
    drop_for_contrast: Option<String>,
    sigma_override: Option<f64>,
}

fn default_alpha() -> f64 {
    0.05
}

fn parse_term(schema: &PredictorSchema, text: &str) -> Result<GroupSource, CliError> {
    let index = |name: &str| {
        schema.index_of(name.trim()).ok_or_else(|| CliError::Data(format!("unknown predictor `{}` in term `{text}`", name.trim())))
    };
    match text.split_once('*') {
        None => Ok(GroupSource::Main(index(text)?)),
        Some((a, b)) => {
            let (i, j) = (index(a)?, index(b)?);
            if i == j {
                return Err(CliError::Data(format!("term `{text}` pairs a predictor with itself")));
            }
            Ok(GroupSource::interaction(i, j))
        }
    }
}

fn cmd_guided(
    data: &DataArgs,
    spec_path: &Path,
    reps: usize,
    config: &VibimConfig,
    seed: u64,
    format: Format,
    out: &mut Output,
) -> Result<(), CliError> {
    let (loaded, design) = load(data)?;
    let file: GuidedFile = load_toml(spec_path).map_err(lib)?;
    let terms = |names: &[String]| names.iter().map(|t| parse_term(&loaded.schema, t)).collect::<Result<Vec<_>, _>>();
    let spec = GuidedSpec {
        terms: terms(&file.terms)?,
        designated: terms(&file.designated)?,
        top_s: file.top_s,
        alpha: file.alpha,
        sigma_override: file.sigma_override,
    };
    let mut runs: Vec<(String, GuidedOutcome)> = Vec::new();
    let full = guided_simulation(&design, &loaded.response, &spec, config, reps, derive_seed(seed, 1))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    runs.push((format!("top_{}", spec.top_s), full));
    if let Some(drop) = &file.drop_for_contrast {
        let contrast = spec.without(parse_term(&loaded.schema, drop)?).map_err(|e| CliError::Usage(e.to_string()))?;
        let outcome = guided_simulation(&design, &loaded.response, &contrast, config, reps, derive_seed(seed, 2))
            .map_err(|e| CliError::Usage(e.to_string()))?;
        runs.push((format!("without {drop}, top_{}", contrast.top_s), outcome));
    }
    let mut table = Table::new(["generator", "reps", "included", "included_and_significant", "failures", "sigma_hat"]);
    for (name, o) in &runs {
        table.push(vec![
            name.clone(),
            o.reps.to_string(),
            o.included.to_string(),
            o.included_and_significant.to_string(),
            o.failures.to_string(),
            fixed(o.sigma_hat, 4),
        ]);
    }
    match format {
        Format::Json => {
            let named: Vec<_> = runs.iter().map(|(n, o)| serde_json::json!({ "generator": n, "outcome": o })).collect();
            out.json("guided.json", &named)?
        }
        Format::Tsv => out.table("guided.tsv", &table)?,
    }
    println!("designated: {}\n{}", file.designated.join(", "), table.to_text());
    Ok(())
}

fn maybe_with_interactions(design: GroupedDesign, interactions: bool) -> Result<GroupedDesign, CliError> {
    if !interactions {
        return Ok(design);
    }
    let all: BTreeSet<usize> = (0..design.n_groups()).collect();
    augment_interactions(&design, &all_pairs(&all)).map_err(lib)
}

fn cmd_fit_path(
    data: &DataArgs,
    penalty: &str,
    n_lambda: usize,
    standardize: bool,
    interactions: bool,
    format: Format,
    out: &mut Output,
) -> Result<(), CliError> {
    let penalty = match penalty.parse::<Method>().map_err(CliError::Usage)? {
        Method::TwoStage { penalty } => penalty,
        Method::Vibim => return Err(CliError::Usage("--penalty must be glasso, gscad or gmcp".into())),
    };
    if n_lambda == 0 {
        return Err(CliError::Usage("--n-lambda must be positive".into()));
    }
    let (loaded, design) = load(data)?;
    let design = maybe_with_interactions(design, interactions)?;
    let mut spec = PenaltySpec::new(penalty).with_grid(LambdaGrid::Auto { n_lambda });
    spec.standardize = standardize;
    let path = fit_path(&design, &loaded.response, &spec).map_err(lib)?;
    let mut table = Table::new(["step", "lambda", "groups", "columns", "converged", "sweeps", "active"]);
    for (k, s) in path.steps.iter().enumerate() {
        let labels: Vec<&str> = s.active_groups.iter().map(|&g| design.group(g).label.as_str()).collect();
        table.push(vec![
            (k + 1).to_string(),
            format_float(s.lambda),
            s.active_groups.len().to_string(),
            design.column_count(&s.active_groups).to_string(),
            s.converged.to_string(),
            s.iterations.to_string(),
            labels.join(","),
        ]);
    }
    match format {
        Format::Json => out.json("path.json", &path)?,
        Format::Tsv => out.table("path.tsv", &table)?,
    }
    println!("{} path: {} steps over {} groups", penalty.short_name(), path.steps.len(), design.n_groups());
    Ok(())
}

fn cmd_soil(
    data: &DataArgs,
    interactions: bool,
    config: &VibimConfig,
    format: Format,
    out: &mut Output,
) -> Result<(), CliError> {
    let (loaded, design) = load(data)?;
    let design = maybe_with_interactions(design, interactions)?;
    let specs: Vec<PenaltySpec> =
        config.penalties.iter().map(|s| s.clone().with_grid(LambdaGrid::Auto { n_lambda: config.n_lambda })).collect();
    let (weighted, imp) = soil_importance(&design, &loaded.response, &specs, config.psi).map_err(lib)?;
    let table = importance_table(&imp);
    match format {
        Format::Json => out.json("soil.json", &imp)?,
        Format::Tsv => out.table("soil.tsv", &table)?,
    }
    println!("{} candidate models\n{}", weighted.set.models.len(), table.to_text());
    Ok(())
}
