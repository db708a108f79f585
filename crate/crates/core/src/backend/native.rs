use super::types::{AppInfo, ControlInfo, ExecutionResult, FunctionCall, Image};
use super::{BackendError, BackendResult, DesktopBackend};

/// Placeholder for an OS accessibility adapter.
///
/// Mirrors [`DesktopBackend`] one to one. No platform binding ships with this
/// crate, so every call reports `BACKEND_UNAVAILABLE`. Multi-monitor capture
/// (concatenating screens into one image) belongs here, not in the simulator.
#[derive(Debug, Default)]
pub struct NativeDesktop;

impl NativeDesktop {
    fn unavailable<T>() -> BackendResult<T> {
        Err(BackendError::Unavailable("no native accessibility adapter is compiled in".into()))
    }
}

impl DesktopBackend for NativeDesktop {
    fn list_applications(&self) -> BackendResult<Vec<AppInfo>> {
        Self::unavailable()
    }

    fn focus_application(&mut self, _app_id: &str) -> BackendResult<ExecutionResult> {
        Self::unavailable()
    }

    fn enumerate_controls(&self, _app_id: &str) -> BackendResult<Vec<ControlInfo>> {
        Self::unavailable()
    }

    fn capture_desktop(&self) -> BackendResult<Image> {
        Self::unavailable()
    }

    fn capture_window(&self, _app_id: &str) -> BackendResult<Image> {
        Self::unavailable()
    }

    fn execute(&mut self, _app_id: &str, _control_id: &str, _call: &FunctionCall) -> BackendResult<ExecutionResult> {
        Self::unavailable()
    }

    fn describe(&mut self, _app_id: &str, _control_id: Option<&str>) -> BackendResult<String> {
        Self::unavailable()
    }
}
