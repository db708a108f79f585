//! Command-line front end and HTTP steering service for deskpilot sessions.

pub mod live;
pub mod service;
pub mod setup;
pub mod term;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("CONFIG_ERROR: {0}")]
    Config(String),
    #[error("SCENARIO_LOAD_FAILURE: {0}")]
    Scenario(#[from] deskpilot_core::backend::ScenarioError),
    #[error("POLICY_LOAD_FAILURE: {0}")]
    Policy(String),
    #[error(transparent)]
    Orchestrator(#[from] deskpilot_core::orchestrator::OrchestratorError),
    #[error(transparent)]
    Eval(#[from] deskpilot_core::eval::EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
