//! Censoring simulation: entrance-age model, artificial censoring by an
//! earlier survey date, synthetic populations and the bias study.

mod bias;
mod censor;
mod entrance;
mod synth;

use thiserror::Error;

pub use bias::{
    replicate_rng, run_bias_study, BiasRecord, BiasReport, BiasRow, BiasSection, BiasStudyConfig, SpatialSetup,
};
pub use censor::{
    observe_at_survey, observe_postponed, simulate_censoring, year_age, Observed, SimScenario, MIN_SURVEY_AGE,
};
pub use entrance::{
    age_at_last_school_start, birth_month_index, fit_entrance_model, next_school_start,
    reverse_entrance_observation, EntranceAgeModel, MAX_ENTRANCE_AGE, MIN_ENTRANCE_AGE,
};
pub use synth::{generate_population, SynthConfig, SyntheticPopulation};

use crate::data::DataError;
use crate::glm::GlmError;
use crate::spatial::SpatialError;
use crate::weighted::EstimateError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation setup: {0}")]
    Config(String),
    #[error("no data: {0}")]
    NoData(String),
    #[error("scenario {0}")]
    Scenario(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
