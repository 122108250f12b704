use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "vibim", version, about = "Variable importance based interaction modeling")]
pub struct Cli {
    /// Base seed; required by every randomized subcommand.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "vibim-out")]
    pub out: PathBuf,
    /// Format of the main report file.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Tsv,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// TOML schema describing the response and predictors.
    #[arg(long)]
    pub schema: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TuningArg {
    Cv,
    Bic,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full procedure and write importance, nested-model and coefficient tables.
    Vibim {
        #[command(flatten)]
        data: DataArgs,
        /// TOML file with procedure settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Monte-Carlo F/G study on a simulation scenario.
    Simulate {
        /// ex1-1 .. ex1-6 or ex2-1 .. ex2-4.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        p: usize,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Comma-separated subset of vibim, glasso, gscad, gmcp.
        #[arg(long, value_delimiter = ',', default_value = "vibim,glasso,gscad,gmcp")]
        methods: Vec<String>,
        /// Model sizes to score (default: true size +- 2).
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Stage-1 tuning of the two-stage baselines.
        #[arg(long, value_enum, default_value_t = TuningArg::Cv)]
        tuning: TuningArg,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Perturbation and subsampling instability (PIVS/SIVS) of several selectors.
    Stability {
        #[command(flatten)]
        data: DataArgs,
        /// Selectors: vibim:<size>, glasso, gscad, gmcp, <penalty>:<size>, constant.
        #[arg(long, value_delimiter = ',', default_value = "glasso,gscad,gmcp,vibim:5,vibim:6,vibim:7,vibim:8,vibim:9")]
        selectors: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2")]
        taus: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1")]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, value_enum, default_value_t = TuningArg::Bic)]
        tuning: TuningArg,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Simulate from a fitted model and count joint inclusion and significance.
    GuidedSim {
        #[command(flatten)]
        data: DataArgs,
        /// TOML file naming the generating terms and the designated terms.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit and dump one penalized regularization path.
    FitPath {
        #[command(flatten)]
        data: DataArgs,
        /// glasso, gscad or gmcp.
        #[arg(long, default_value = "glasso")]
        penalty: String,
        #[arg(long, default_value_t = 100)]
        n_lambda: usize,
        /// Use the raw columns instead of orthonormalized groups.
        #[arg(long)]
        no_standardize: bool,
        /// Also fit every pairwise interaction of the predictors.
        #[arg(long)]
        interactions: bool,
    },
    /// SOIL importance only, for main effects or with all pairwise interactions.
    Soil {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        interactions: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

impl Command {
    pub fn is_randomized(&self) -> bool {
        !matches!(self, Command::FitPath { .. } | Command::Soil { .. })
    }
}
