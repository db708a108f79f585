//! Dual-agent desktop automation.
//!
//! An application-selection agent picks which running application handles
//! the next part of a request; an action-selection agent then operates that
//! application one labeled control at a time. Both talk to a model through
//! [`bridge`], act through a [`backend::DesktopBackend`], and are driven by
//! the [`orchestrator`]. [`eval`] scores runs on benchmark tasks.

pub mod act_agent;
pub mod annotate;
pub mod app_agent;
pub mod backend;
pub mod bridge;
pub mod config;
pub mod engine;
pub mod eval;
pub mod filter;
pub mod orchestrator;
pub mod session;

pub use annotate::{annotate, highlight_previous, LabelMap, Palette};
pub use backend::{
    AppInfo, ControlInfo, ControlKind, ControlType, DesktopBackend, ExecutionResult, FunctionCall, Image, Rect,
    Scenario, SharedBackend, SimDesktop,
};
pub use bridge::{ActAgentDecision, AppAgentDecision, ModelAdapter, PolicyTable, ScriptedPolicy};
pub use engine::{ActionEngine, ActionRegistry, ActionSpec};
pub use filter::FilterConfig;
pub use orchestrator::{Orchestrator, RunLimits, SessionEvent, SessionOutcome};
pub use session::{AgentStatus, MemoryEntry, Session};
