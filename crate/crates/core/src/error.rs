use thiserror::Error;

use crate::encoding::EncodingError;
use crate::evaluation::EvaluationError;
use crate::io::IoError;
use crate::regression::RegressionError;
use crate::simgen::SimError;
use crate::solvers::SolverError;
use crate::study::StudyError;
use crate::vibim::VibimError;

/// Any failure surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Vibim(#[from] VibimError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Study(#[from] StudyError),
}

impl Error {
    /// Input data or configuration problems, as opposed to numerical failures.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Io(_) | Error::Encoding(_) | Error::Simulation(_) => true,
            Error::Regression(e) => !matches!(e, RegressionError::ColumnOutOfRange(_)),
            Error::Vibim(e) => matches!(e, VibimError::EmptyDesign | VibimError::TooFewRows(_) | VibimError::NotMainEffects),
            Error::Solver(e) => matches!(e, SolverError::EmptyDesign | SolverError::AllConstantDesign),
            Error::Evaluation(_) | Error::Study(_) => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
