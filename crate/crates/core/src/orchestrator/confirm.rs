use std::collections::{BTreeSet, VecDeque};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::Serialize;

use super::OrchestratorError;
use crate::engine::SensitiveCategory;

pub const DEFAULT_CONFIRMATION_TIMEOUT: Duration = Duration::from_secs(300);

/// What the user is asked to approve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfirmationRequest {
    pub step_index: u64,
    pub function: String,
    pub control_title: String,
    pub category: Option<SensitiveCategory>,
    pub reason: String,
}

impl ConfirmationRequest {
    pub fn summary(&self) -> String {
        format!("{} on {:?} ({})", self.function, self.control_title, self.reason)
    }
}

/// Source of approve/deny verdicts for sensitive actions.
pub trait ConfirmationGate: Send {
    fn decide(&mut self, request: &ConfirmationRequest) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AutoApprove;

impl ConfirmationGate for AutoApprove {
    fn decide(&mut self, _: &ConfirmationRequest) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AutoDeny;

impl ConfirmationGate for AutoDeny {
    fn decide(&mut self, _: &ConfirmationRequest) -> bool {
        false
    }
}

/// Replays a fixed list of verdicts, then denies everything.
#[derive(Debug, Clone, Default)]
pub struct ScriptedGate {
    verdicts: VecDeque<bool>,
    pub asked: Vec<ConfirmationRequest>,
}

impl ScriptedGate {
    pub fn new(verdicts: impl IntoIterator<Item = bool>) -> Self {
        ScriptedGate { verdicts: verdicts.into_iter().collect(), asked: Vec::new() }
    }
}

impl ConfirmationGate for ScriptedGate {
    fn decide(&mut self, request: &ConfirmationRequest) -> bool {
        self.asked.push(request.clone());
        self.verdicts.pop_front().unwrap_or(false)
    }
}

impl<F: FnMut(&ConfirmationRequest) -> bool + Send> ConfirmationGate for F {
    fn decide(&mut self, request: &ConfirmationRequest) -> bool {
        self(request)
    }
}

#[derive(Debug, Default)]
struct Slot {
    pending: Option<u64>,
    verdict: Option<bool>,
    resolved: BTreeSet<u64>,
}

/// Cross-thread rendezvous between a blocked step and whoever resolves it.
#[derive(Debug, Clone, Default)]
pub struct ConfirmationHandle {
    inner: Arc<(Mutex<Slot>, Condvar)>,
}

impl ConfirmationHandle {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, Slot> {
        self.inner.0.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Step currently waiting for a verdict.
    pub fn pending(&self) -> Option<u64> {
        let g = self.lock();
        g.pending.filter(|_| g.verdict.is_none())
    }

    /// Delivers a verdict to the step waiting on `step_index`.
    pub fn resolve(&self, step_index: u64, approved: bool) -> Result<(), OrchestratorError> {
        let mut g = self.lock();
        match g.pending {
            Some(p) if p == step_index && g.verdict.is_none() => {
                g.verdict = Some(approved);
                self.inner.1.notify_all();
                Ok(())
            }
            Some(p) => Err(OrchestratorError::StaleStep { requested: step_index, pending: Some(p) }),
            None if g.resolved.contains(&step_index) => {
                Err(OrchestratorError::StaleStep { requested: step_index, pending: None })
            }
            None => Err(OrchestratorError::NoPendingConfirmation),
        }
    }

    /// Blocks until `step_index` is resolved; `None` on timeout.
    fn wait(&self, step_index: u64, timeout: Duration) -> Option<bool> {
        let deadline = Instant::now() + timeout;
        let mut g = self.lock();
        g.pending = Some(step_index);
        g.verdict = None;
        self.inner.1.notify_all();
        while g.verdict.is_none() {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            g = self.inner.1.wait_timeout(g, deadline - now).unwrap_or_else(|p| p.into_inner()).0;
        }
        let verdict = g.verdict.take();
        g.pending = None;
        g.resolved.insert(step_index);
        verdict
    }

    /// Blocks until some step is waiting for a verdict, or `timeout` passes.
    pub fn wait_pending(&self, timeout: Duration) -> Option<u64> {
        let deadline = Instant::now() + timeout;
        let mut g = self.lock();
        loop {
            if let (Some(p), None) = (g.pending, g.verdict) {
                return Some(p);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            g = self.inner.1.wait_timeout(g, deadline - now).unwrap_or_else(|p| p.into_inner()).0;
        }
    }
}

/// Gate that blocks the step until [`ConfirmationHandle::resolve`] is called
/// from another thread. A timeout counts as a denial.
#[derive(Debug, Clone)]
pub struct ChannelGate {
    pub handle: ConfirmationHandle,
    pub timeout: Duration,
}

impl ChannelGate {
    pub fn new(handle: ConfirmationHandle) -> Self {
        ChannelGate { handle, timeout: DEFAULT_CONFIRMATION_TIMEOUT }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl ConfirmationGate for ChannelGate {
    fn decide(&mut self, request: &ConfirmationRequest) -> bool {
        match self.handle.wait(request.step_index, self.timeout) {
            Some(v) => v,
            None => {
                tracing::warn!(step = request.step_index, "confirmation timed out; treating as denied");
                false
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(step: u64) -> ConfirmationRequest {
        ConfirmationRequest {
            step_index: step,
            function: "Click".into(),
            control_title: "Send".into(),
            category: None,
            reason: "r".into(),
        }
    }

    #[test]
    fn nothing_pending() {
        let h = ConfirmationHandle::new();
        assert_eq!(h.resolve(3, true), Err(OrchestratorError::NoPendingConfirmation));
    }

    #[test]
    fn resolve_unblocks_and_double_resolve_is_stale() {
        let h = ConfirmationHandle::new();
        let mut gate = ChannelGate::new(h.clone());
        let t = std::thread::spawn(move || gate.decide(&req(5)));
        assert_eq!(h.wait_pending(Duration::from_secs(5)), Some(5));
        assert_eq!(h.resolve(3, true), Err(OrchestratorError::StaleStep { requested: 3, pending: Some(5) }));
        h.resolve(5, true).unwrap();
        assert!(matches!(h.resolve(5, false), Err(OrchestratorError::StaleStep { .. })));
        assert!(t.join().unwrap());
        assert!(matches!(h.resolve(5, false), Err(OrchestratorError::StaleStep { .. })));
        assert_eq!(h.pending(), None);
    }

    #[test]
    fn timeout_denies() {
        let mut gate = ChannelGate::new(ConfirmationHandle::new()).with_timeout(Duration::from_millis(10));
        assert!(!gate.decide(&req(1)));
    }

    #[test]
    fn scripted_gate_denies_when_exhausted() {
        let mut g = ScriptedGate::new([true]);
        assert!(g.decide(&req(1)));
        assert!(!g.decide(&req(2)));
        assert_eq!(g.asked.len(), 2);
    }
}
