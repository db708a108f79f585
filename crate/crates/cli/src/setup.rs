//! Builds orchestrators from command-line inputs.

use std::path::{Path, PathBuf};

use deskpilot_core::backend::{Scenario, SimDesktop};
use deskpilot_core::bridge::{ModelAdapter, PolicyTable, ScriptedPolicy};
use deskpilot_core::config::Config;
use deskpilot_core::Orchestrator;

use crate::live::LiveAdapter;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum PolicyKind {
    /// Rule table read from a policy file.
    #[default]
    Scripted,
    /// Remote vision-language model configured through the environment.
    Live,
}

/// Everything needed to open a session on a simulated desktop.
#[derive(Debug, Clone)]
pub struct SessionSpec {
    pub scenario: PathBuf,
    /// Policy table for the scripted adapter; defaults to `policy.json`
    /// next to the scenario file.
    pub rules: Option<PathBuf>,
    pub policy: PolicyKind,
    pub config: Config,
}

/// Reads a TOML config file, or the defaults when no path is given.
pub fn load_config(path: Option<&Path>, limit_overrides: &[String]) -> Result<Config, CliError> {
    let mut config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Config::default(),
    };
    for assignment in limit_overrides {
        config.limits.set(assignment)?;
    }
    Ok(config)
}

impl SessionSpec {
    pub fn rules_path(&self) -> PathBuf {
        self.rules.clone().unwrap_or_else(|| {
            self.scenario.parent().map(|d| d.join("policy.json")).unwrap_or_else(|| PathBuf::from("policy.json"))
        })
    }

    pub fn load_scenario(&self) -> Result<Scenario, CliError> {
        Ok(Scenario::load(&self.scenario)?)
    }

    pub fn adapter(&self) -> Result<Box<dyn ModelAdapter>, CliError> {
        match self.policy {
            PolicyKind::Scripted => {
                let path = self.rules_path();
                let table =
                    PolicyTable::load(&path).map_err(|e| CliError::Policy(format!("{}: {e}", path.display())))?;
                Ok(Box::new(ScriptedPolicy::new(table)))
            }
            PolicyKind::Live => Ok(Box::new(LiveAdapter::from_env())),
        }
    }

    /// An orchestrator over a fresh simulator, with the configured filter,
    /// engine and limits. The confirmation gate is left at its default.
    pub fn orchestrator(&self, session_id: &str) -> Result<Orchestrator, CliError> {
        let desktop = SimDesktop::new(self.load_scenario()?);
        self.orchestrator_on(session_id, Box::new(desktop))
    }

    pub fn orchestrator_on(
        &self,
        session_id: &str,
        backend: Box<dyn deskpilot_core::backend::DesktopBackend>,
    ) -> Result<Orchestrator, CliError> {
        let filter = self.config.filter_config().map_err(|e| CliError::Config(e.to_string()))?;
        let engine = self.config.engine().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Orchestrator::new(session_id, backend, self.adapter()?)
            .with_filter(filter)
            .with_engine(engine)
            .with_limits(self.config.limits))
    }
}
