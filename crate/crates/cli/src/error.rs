use std::path::Path;

use thiserror::Error;
use uys::aggregate::AggregateError;
use uys::data::DataError;
use uys::glm::GlmError;
use uys::sim::SimError;
use uys::spatial::SpatialError;
use uys::weighted::EstimateError;

/// Failures grouped by pipeline stage; the stage decides the exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Ingestion(String),
    #[error("{0}")]
    Estimation(String),
    #[error("{0}")]
    Simulation(String),
    #[error("{0}")]
    Aggregation(String),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Output { .. } => 1,
            CliError::Ingestion(_) => 2,
            CliError::Estimation(_) => 3,
            CliError::Simulation(_) => 4,
            CliError::Aggregation(_) => 5,
        }
    }

    pub fn output(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Output {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn ingestion_at(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Ingestion(format!("{}: {err}", path.display()))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Ingestion(e.to_string())
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        CliError::Estimation(e.to_string())
    }
}

impl From<GlmError> for CliError {
    fn from(e: GlmError) -> Self {
        CliError::Estimation(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Simulation(e.to_string())
    }
}

impl From<AggregateError> for CliError {
    fn from(e: AggregateError) -> Self {
        CliError::Aggregation(e.to_string())
    }
}

/// Spatial errors belong to estimation when fitting and to aggregation
/// when reading draws for a report, so they are converted explicitly.
pub fn estimation(e: SpatialError) -> CliError {
    CliError::Estimation(e.to_string())
}

pub fn aggregation(e: SpatialError) -> CliError {
    CliError::Aggregation(e.to_string())
}
