//! JSON experiment configuration. Field names mirror the config structs of
//! each module; missing fields take their defaults and unknown keys are
//! rejected.

use std::path::Path;

use crate::trainer::ExperimentConfig;

use super::{HarnessError, Result};

/// Parses and validates a config document. `origin` only labels errors.
pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    let invalid = |message: String| HarnessError::Config {
        path: origin.to_string(),
        message,
    };
    config.train.validate().map_err(|e| invalid(e.to_string()))?;
    config.episode.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text, &path.display().to_string())
}
