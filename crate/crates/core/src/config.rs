//! Project configuration. Serialized flat: the JSON object carries the
//! strategy, quality-control and historical-prior fields side by side.

use serde::{Deserialize, Serialize};

use crate::crowdsim::QualityRules;
use crate::error::ValidationError;
use crate::strategy::StrategyConfig;

/// Stand-ins for generic historical estimates, used before a project has
/// its own criterion statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistoricalPriors {
    pub historical_selectivity: f64,
    pub historical_accuracy: f64,
}

impl Default for HistoricalPriors {
    fn default() -> Self {
        Self {
            historical_selectivity: 0.35,
            historical_accuracy: 0.8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectConfig {
    #[serde(flatten)]
    pub strategy: StrategyConfig,
    #[serde(flatten)]
    pub quality: QualityRules,
    #[serde(flatten)]
    pub historical: HistoricalPriors,
}

impl ProjectConfig {
    pub fn from_json(json: &str) -> Result<Self, ValidationError> {
        let config: ProjectConfig = serde_json::from_str(json).map_err(|e| ValidationError::Malformed {
            document: "config.json",
            reason: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        self.strategy.validate()?;
        self.quality.validate()?;
        let h = &self.historical;
        if !(h.historical_selectivity > 0.0 && h.historical_selectivity < 1.0) {
            return Err(ValidationError::Config("historical_selectivity must be in (0,1)".into()));
        }
        if !(h.historical_accuracy > 0.5 && h.historical_accuracy <= 1.0) {
            return Err(ValidationError::Config("historical_accuracy must be in (0.5,1]".into()));
        }
        Ok(())
    }
}
