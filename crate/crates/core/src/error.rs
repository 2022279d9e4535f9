use thiserror::Error;

use crate::estimators::EstimateReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("performance function returned a non-finite value {value} at {point:?}")]
    Evaluation { point: Vec<f64>, value: f64 },

    #[error("point {0:?} duplicates an existing design point")]
    DuplicatePoint(Vec<f64>),

    #[error("covariance fitting failed: {0}")]
    Fit(String),

    #[error("kriging prediction failed: {0}")]
    Prediction(String),

    #[error("every candidate duplicates an existing design point")]
    NoSelectablePoint,

    #[error("degenerate particle population: {0}")]
    DegeneratePopulation(String),

    #[error("degenerate surrogate model: {0}")]
    DegenerateModel(String),

    #[error("stage {stage} failed after {evaluations} evaluations: {source}")]
    Stage {
        stage: usize,
        evaluations: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("no convergence to the failure threshold after {stages} stages")]
    NonConvergence {
        stages: usize,
        partial: Box<EstimateReport>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
