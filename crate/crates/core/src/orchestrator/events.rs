use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::session::SessionState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    RoundStarted,
    AppSelected,
    StepObserved,
    DecisionMade,
    ConfirmationRequested,
    ConfirmationResolved,
    ActionExecuted,
    PhaseSwitched,
    RequestCompleted,
    RequestFailed,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub sequence: u64,
    pub kind: EventKind,
    pub payload: Value,
}

#[derive(Debug)]
struct FeedState {
    events: Vec<SessionEvent>,
    state: SessionState,
    busy: bool,
}

/// Append-only event log shared between the control thread and readers.
///
/// Sequence numbers start at 1, so `since(0)` returns everything.
#[derive(Debug, Clone)]
pub struct EventFeed {
    inner: Arc<(Mutex<FeedState>, Condvar)>,
}

impl Default for EventFeed {
    fn default() -> Self {
        EventFeed {
            inner: Arc::new((
                Mutex::new(FeedState { events: Vec::new(), state: SessionState::AwaitingUser, busy: false }),
                Condvar::new(),
            )),
        }
    }
}

impl EventFeed {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, FeedState> {
        self.inner.0.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn push(&self, kind: EventKind, payload: Value) -> u64 {
        let mut g = self.lock();
        let sequence = g.events.len() as u64 + 1;
        g.events.push(SessionEvent { sequence, kind, payload });
        self.inner.1.notify_all();
        sequence
    }

    /// Events with a sequence greater than `after`.
    pub fn since(&self, after: u64) -> Vec<SessionEvent> {
        let g = self.lock();
        g.events.iter().skip(after.min(g.events.len() as u64) as usize).cloned().collect()
    }

    pub fn all(&self) -> Vec<SessionEvent> {
        self.since(0)
    }

    pub fn len(&self) -> usize {
        self.lock().events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Blocks until an event after `after` exists or `timeout` passes.
    pub fn wait_since(&self, after: u64, timeout: Duration) -> Vec<SessionEvent> {
        let deadline = Instant::now() + timeout;
        let mut g = self.lock();
        while g.events.len() as u64 <= after {
            let now = Instant::now();
            if now >= deadline {
                return Vec::new();
            }
            g = self.inner.1.wait_timeout(g, deadline - now).unwrap_or_else(|p| p.into_inner()).0;
        }
        g.events[after as usize..].to_vec()
    }

    pub fn state(&self) -> SessionState {
        self.lock().state
    }

    pub fn set_state(&self, state: SessionState) {
        self.lock().state = state;
        self.inner.1.notify_all();
    }

    pub fn is_busy(&self) -> bool {
        self.lock().busy
    }

    /// Claims the session for one request; false if one is already running.
    pub fn try_begin(&self) -> bool {
        let mut g = self.lock();
        if g.busy {
            return false;
        }
        g.busy = true;
        true
    }

    pub fn finish(&self) {
        self.lock().busy = false;
        self.inner.1.notify_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn sequences_increase_and_cursor_resumes() {
        let feed = EventFeed::new();
        for i in 0..6 {
            feed.push(EventKind::Comment, json!({ "i": i }));
        }
        let first: Vec<u64> = feed.since(0).iter().map(|e| e.sequence).collect();
        assert_eq!(first, [1, 2, 3, 4, 5, 6]);
        let rest: Vec<u64> = feed.since(4).iter().map(|e| e.sequence).collect();
        assert_eq!(rest, [5, 6]);
        assert!(feed.since(6).is_empty());
        assert!(feed.since(60).is_empty());
    }

    #[test]
    fn wait_returns_new_events() {
        let feed = EventFeed::new();
        let f2 = feed.clone();
        let h = std::thread::spawn(move || f2.wait_since(0, Duration::from_secs(5)));
        std::thread::sleep(Duration::from_millis(20));
        feed.push(EventKind::Comment, Value::Null);
        assert_eq!(h.join().unwrap().len(), 1);
        assert!(feed.wait_since(1, Duration::from_millis(10)).is_empty());
    }

    #[test]
    fn busy_flag_is_exclusive() {
        let feed = EventFeed::new();
        assert!(feed.try_begin());
        assert!(!feed.try_begin());
        feed.finish();
        assert!(feed.try_begin());
    }
}
