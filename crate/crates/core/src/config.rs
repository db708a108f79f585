//! Runtime configuration: control whitelist, custom actions, metrics and limits.

use serde::{Deserialize, Serialize};

use crate::backend::ControlType;
use crate::engine::{ActionEngine, ActionRegistry, ActionSpec, EngineError};
use crate::filter::{FilterConfig, FilterError, DEFAULT_SOFT_TRIGGER};
use crate::orchestrator::RunLimits;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub allowed_types: Vec<String>,
    pub soft_trigger_threshold: usize,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            allowed_types: ControlType::ALL.iter().map(|t| t.name().to_string()).collect(),
            soft_trigger_threshold: DEFAULT_SOFT_TRIGGER,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionsSection {
    pub custom: Vec<ActionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    /// Whether app-selection decisions count toward a task's steps.
    pub count_app_steps: bool,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection { count_app_steps: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub filter: FilterSection,
    pub actions: ActionsSection,
    pub metrics: MetricsSection,
    pub limits: RunLimits,
}

impl Config {
    pub fn filter_config(&self) -> Result<FilterConfig, FilterError> {
        FilterConfig::from_names(&self.filter.allowed_types, self.filter.soft_trigger_threshold)
    }

    /// Action engine with the builtins plus every configured custom action.
    pub fn engine(&self) -> Result<ActionEngine, EngineError> {
        let mut registry = ActionRegistry::new();
        for spec in &self.actions.custom {
            registry.register(spec.clone())?;
        }
        Ok(ActionEngine::new(registry))
    }
}
