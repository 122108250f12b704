//! Variable importance based interaction modeling (VIBIM) for linear models
//! with continuous and categorical predictors.

pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod importance;
pub mod io;
pub mod linalg;
pub mod regression;
pub mod rng;
pub mod simgen;
pub mod solvers;
pub mod study;
pub mod vibim;

pub use encoding::{
    augment_interactions, encode, EncodingError, Group, GroupSource, GroupedDesign, Predictor, PredictorKind,
    PredictorSchema, RawColumn, RawTable,
};
pub use error::{Error, Result};
pub use evaluation::{f_and_g, fg_measure, pivs, sivs, vif, EvaluationError, Selector, StabilityScore};
pub use importance::{bicp_weights, soil, soil_importance, ImportanceVector, ModelSet, WeightedModelSet};
pub use io::{load_dataset, write_report, DataSchemaFile, IoError, LoadedDataset, ReportFormat};
pub use regression::{criteria, fit_ols, CriterionValue, OlsFit, RegressionError};
pub use simgen::{generate, Scenario, SimDesignSpec, SimError, SimulatedData};
pub use solvers::{
    fit_path, lambda_grid, two_stage, LambdaGrid, Penalty, PenaltySpec, SolverError, SolverPath, SolverStep, Tuning,
};
pub use study::{guided_simulation, run_simulation, GuidedSpec, Method, SimulationPlan, StudyError};
pub use vibim::{run_vibim, HighDimCriteria, VibimConfig, VibimError, VibimReport};
