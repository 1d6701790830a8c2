//! The `--config` file: one JSON object whose sections feed the library's
//! own configuration types. Every section is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};
use uys::data::SchemaConfig;
use uys::sim::{BiasStudyConfig, SynthConfig};
use uys::spatial::McmcConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: SchemaConfig,
    pub mcmc: McmcConfig,
    pub simulation: BiasStudyConfig,
    pub synthetic: SynthConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::ingestion_at(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::ingestion_at(path, e))
    }
}
