//! The grounding surface agents act through.
//!
//! [`DesktopBackend`] lists applications, enumerates controls, captures
//! screenshots and executes functions on controls. [`SimDesktop`] implements
//! it deterministically from a [`Scenario`] file; [`NativeDesktop`] is the
//! seam for a real OS accessibility adapter.

mod native;
mod raster;
mod scenario;
mod sim;
mod types;

pub use native::NativeDesktop;
pub use raster::{control_fill, FRAME_COLOR, FRAME_MARGIN, WINDOW_BACKGROUND};
pub use scenario::{
    AppSpec, Condition, ControlSpec, Effect, Scenario, ScenarioError, Transition, DESKTOP_BACKGROUND,
};
pub use sim::SimDesktop;
pub use types::{
    AppInfo, ControlInfo, ControlKind, ControlType, ExecutionResult, FunctionCall, Image, Rect,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("BACKEND_UNAVAILABLE: {0}")]
    Unavailable(String),
    #[error("UNKNOWN_APP: {0}")]
    UnknownApp(String),
    #[error("NOT_FOCUSED: {0}")]
    NotFocused(String),
    #[error("UNKNOWN_CONTROL: {0}")]
    UnknownControl(String),
    #[error("CONTROL_DISABLED: {0}")]
    ControlDisabled(String),
    #[error("FUNCTION_TYPE_MISMATCH: {function} on {kind}")]
    FunctionTypeMismatch { function: String, kind: String },
}

impl BackendError {
    pub fn code(&self) -> &'static str {
        match self {
            BackendError::Unavailable(_) => "BACKEND_UNAVAILABLE",
            BackendError::UnknownApp(_) => "UNKNOWN_APP",
            BackendError::NotFocused(_) => "NOT_FOCUSED",
            BackendError::UnknownControl(_) => "UNKNOWN_CONTROL",
            BackendError::ControlDisabled(_) => "CONTROL_DISABLED",
            BackendError::FunctionTypeMismatch { .. } => "FUNCTION_TYPE_MISMATCH",
        }
    }
}

pub type BackendResult<T> = Result<T, BackendError>;

/// A desktop an agent can observe and act upon.
///
/// One instance serves one session; callers serialize access.
pub trait DesktopBackend: Send {
    fn list_applications(&self) -> BackendResult<Vec<AppInfo>>;

    fn focus_application(&mut self, app_id: &str) -> BackendResult<ExecutionResult>;

    /// All controls visible in the focused app's current state, unfiltered.
    fn enumerate_controls(&self, app_id: &str) -> BackendResult<Vec<ControlInfo>>;

    fn capture_desktop(&self) -> BackendResult<Image>;

    fn capture_window(&self, app_id: &str) -> BackendResult<Image>;

    fn execute(&mut self, app_id: &str, control_id: &str, call: &FunctionCall) -> BackendResult<ExecutionResult>;

    /// Textual description of what the window (or one of its controls)
    /// currently shows. Backs the `Summary` function.
    fn describe(&mut self, app_id: &str, control_id: Option<&str>) -> BackendResult<String>;

    /// Stable digest of all mutable desktop state, when the backend can provide one.
    fn state_hash(&self) -> Option<String> {
        None
    }

    /// Evaluates a named success predicate, when the backend supports them.
    fn check_hook(&self, _name: &str) -> Option<bool> {
        None
    }
}

/// A backend owned jointly by the orchestrator and an outside observer,
/// such as a test or a service reading simulator state.
#[derive(Debug, Default)]
pub struct SharedBackend<B> {
    inner: std::sync::Arc<std::sync::Mutex<B>>,
}

impl<B> Clone for SharedBackend<B> {
    fn clone(&self) -> Self {
        SharedBackend { inner: self.inner.clone() }
    }
}

impl<B> SharedBackend<B> {
    pub fn new(backend: B) -> Self {
        SharedBackend { inner: std::sync::Arc::new(std::sync::Mutex::new(backend)) }
    }

    pub fn lock(&self) -> std::sync::MutexGuard<'_, B> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl<B: DesktopBackend> DesktopBackend for SharedBackend<B> {
    fn list_applications(&self) -> BackendResult<Vec<AppInfo>> {
        self.lock().list_applications()
    }

    fn focus_application(&mut self, app_id: &str) -> BackendResult<ExecutionResult> {
        self.lock().focus_application(app_id)
    }

    fn enumerate_controls(&self, app_id: &str) -> BackendResult<Vec<ControlInfo>> {
        self.lock().enumerate_controls(app_id)
    }

    fn capture_desktop(&self) -> BackendResult<Image> {
        self.lock().capture_desktop()
    }

    fn capture_window(&self, app_id: &str) -> BackendResult<Image> {
        self.lock().capture_window(app_id)
    }

    fn execute(&mut self, app_id: &str, control_id: &str, call: &FunctionCall) -> BackendResult<ExecutionResult> {
        self.lock().execute(app_id, control_id, call)
    }

    fn describe(&mut self, app_id: &str, control_id: Option<&str>) -> BackendResult<String> {
        self.lock().describe(app_id, control_id)
    }

    fn state_hash(&self) -> Option<String> {
        self.lock().state_hash()
    }

    fn check_hook(&self, name: &str) -> Option<bool> {
        self.lock().check_hook(name)
    }
}
