//! The session state machine: app selection, the act loop, status routing,
//! confirmations, caps and the event feed.

mod confirm;
mod events;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use confirm::{
    AutoApprove, AutoDeny, ChannelGate, ConfirmationGate, ConfirmationHandle, ConfirmationRequest, ScriptedGate,
    DEFAULT_CONFIRMATION_TIMEOUT,
};
pub use events::{EventFeed, EventKind, SessionEvent};

use crate::act_agent::{handle_screenshot_redo, observe, record_step, select_action, PreviousStep, StepContext};
use crate::app_agent::{select_application, AgentError, AgentSettings};
use crate::backend::{AppInfo, BackendError, ControlInfo, DesktopBackend, Image};
use crate::bridge::{ActAgentDecision, ModelAdapter};
use crate::engine::{classify_sensitivity, ActionEngine, EngineError};
use crate::filter::FilterConfig;
use crate::session::{result_digest, AgentKind, AgentStatus, Session, SessionLog, SessionLogRecord, SessionState, UserRequest};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrchestratorError {
    #[error("STEP_LIMIT_EXCEEDED: {0} steps")]
    StepLimitExceeded(u64),
    #[error("PHASE_LIMIT_EXCEEDED: {0} phases")]
    PhaseLimitExceeded(u32),
    #[error("NO_PENDING_CONFIRMATION")]
    NoPendingConfirmation,
    #[error("STALE_STEP: step {requested} is not awaiting confirmation")]
    StaleStep { requested: u64, pending: Option<u64> },
    #[error("SESSION_CLOSED")]
    SessionClosed,
    #[error("EMPTY_REQUEST")]
    EmptyRequest,
    #[error("INVALID_LIMIT: {0}")]
    InvalidLimit(String),
    #[error("LOG_WRITE: {0}")]
    Log(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl OrchestratorError {
    pub fn code(&self) -> &'static str {
        match self {
            OrchestratorError::StepLimitExceeded(_) => "STEP_LIMIT_EXCEEDED",
            OrchestratorError::PhaseLimitExceeded(_) => "PHASE_LIMIT_EXCEEDED",
            OrchestratorError::NoPendingConfirmation => "NO_PENDING_CONFIRMATION",
            OrchestratorError::StaleStep { .. } => "STALE_STEP",
            OrchestratorError::SessionClosed => "SESSION_CLOSED",
            OrchestratorError::EmptyRequest => "EMPTY_REQUEST",
            OrchestratorError::InvalidLimit(_) => "INVALID_LIMIT",
            OrchestratorError::Log(_) => "LOG_WRITE",
            OrchestratorError::Agent(AgentError::ModelFailure(e)) => e.code(),
            OrchestratorError::Agent(e) => e.code(),
            OrchestratorError::Engine(e) => e.code(),
            OrchestratorError::Backend(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunLimits {
    pub max_steps_per_request: u64,
    pub max_phases_per_request: u32,
    pub parse_retries: u32,
    pub screenshot_redos_per_step: u32,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits { max_steps_per_request: 30, max_phases_per_request: 5, parse_retries: 2, screenshot_redos_per_step: 1 }
    }
}

impl RunLimits {
    /// Applies one `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), OrchestratorError> {
        let bad = || OrchestratorError::InvalidLimit(assignment.to_string());
        let (key, value) = assignment.split_once('=').ok_or_else(bad)?;
        let n: u64 = value.trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        let small = || u32::try_from(n).map_err(|_| bad());
        match key.trim() {
            "max_steps_per_request" | "max_steps" => self.max_steps_per_request = n,
            "max_phases_per_request" | "max_phases" => self.max_phases_per_request = small()?,
            "parse_retries" => self.parse_retries = small()?,
            "screenshot_redos_per_step" | "redos" => self.screenshot_redos_per_step = small()?,
            _ => return Err(bad()),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub succeeded: bool,
    pub steps: u64,
    pub phases: u32,
    pub failure_reason: Option<String>,
}

/// Rebuilds the outcome of the most recent finished request from the event log.
pub fn outcome_from_events(events: &[SessionEvent]) -> Option<SessionOutcome> {
    let start = events.iter().rposition(|e| e.kind == EventKind::RoundStarted)?;
    let round = &events[start..];
    let terminal = round.iter().find(|e| matches!(e.kind, EventKind::RequestCompleted | EventKind::RequestFailed))?;
    let steps = round
        .iter()
        .filter(|e| e.kind == EventKind::DecisionMade && e.payload["counts_as_step"] == json!(true))
        .count() as u64;
    let phases = round.iter().filter(|e| e.kind == EventKind::AppSelected).count() as u32;
    let failure_reason = match terminal.kind {
        EventKind::RequestFailed => terminal.payload["failure_reason"].as_str().map(str::to_string),
        _ => None,
    };
    Some(SessionOutcome { succeeded: terminal.kind == EventKind::RequestCompleted, steps, phases, failure_reason })
}

type PngMap = BTreeMap<(u64, String), Vec<u8>>;

/// PNG screenshots keyed by step and role, optionally mirrored to disk.
#[derive(Debug, Clone, Default)]
pub struct ScreenshotStore {
    images: Arc<Mutex<PngMap>>,
    dir: Option<PathBuf>,
}

impl ScreenshotStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(ScreenshotStore { images: Arc::default(), dir: Some(dir) })
    }

    pub fn put(&self, step: u64, role: &str, image: &Image) {
        let png = image.to_png();
        if let Some(dir) = &self.dir {
            if let Err(e) = std::fs::write(dir.join(format!("step{step}_{role}.png")), &png) {
                tracing::warn!(error = %e, "could not write screenshot");
            }
        }
        self.images.lock().unwrap_or_else(|p| p.into_inner()).insert((step, role.to_string()), png);
    }

    pub fn get(&self, step: u64, role: &str) -> Option<Vec<u8>> {
        self.images.lock().unwrap_or_else(|p| p.into_inner()).get(&(step, role.to_string())).cloned()
    }
}

enum PhaseEnd {
    Finish,
    Switch,
}

/// Drives one session against one backend.
pub struct Orchestrator {
    pub session: Session,
    backend: Box<dyn DesktopBackend>,
    adapter: Box<dyn ModelAdapter>,
    pub engine: ActionEngine,
    pub filter: FilterConfig,
    pub settings: AgentSettings,
    pub limits: RunLimits,
    gate: Box<dyn ConfirmationGate>,
    feed: EventFeed,
    log: SessionLog,
    screenshots: Option<ScreenshotStore>,
}

impl Orchestrator {
    /// A session with default limits and filter that denies every sensitive action.
    pub fn new(session_id: &str, backend: Box<dyn DesktopBackend>, adapter: Box<dyn ModelAdapter>) -> Self {
        Orchestrator {
            session: Session::new(session_id),
            backend,
            adapter,
            engine: ActionEngine::default(),
            filter: FilterConfig::default(),
            settings: AgentSettings::default(),
            limits: RunLimits::default(),
            gate: Box::new(AutoDeny),
            feed: EventFeed::new(),
            log: SessionLog::in_memory(),
            screenshots: None,
        }
    }

    pub fn with_gate(mut self, gate: Box<dyn ConfirmationGate>) -> Self {
        self.gate = gate;
        self
    }

    pub fn with_limits(mut self, limits: RunLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_engine(mut self, engine: ActionEngine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_filter(mut self, filter: FilterConfig) -> Self {
        self.filter = filter;
        self
    }

    pub fn with_log(mut self, log: SessionLog) -> Self {
        self.log = log;
        self
    }

    pub fn with_feed(mut self, feed: EventFeed) -> Self {
        self.feed = feed;
        self
    }

    pub fn with_screenshots(mut self, store: ScreenshotStore) -> Self {
        self.screenshots = Some(store);
        self
    }

    pub fn feed(&self) -> &EventFeed {
        &self.feed
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn backend(&self) -> &dyn DesktopBackend {
        self.backend.as_ref()
    }

    fn set_state(&mut self, state: SessionState) {
        self.session.state = state;
        self.feed.set_state(state);
    }

    fn emit(&self, kind: EventKind, payload: serde_json::Value) {
        self.feed.push(kind, payload);
    }

    fn store(&self, step: u64, role: &str, image: &Image) {
        if let Some(s) = &self.screenshots {
            s.put(step, role, image);
        }
    }

    fn write_log(&mut self, record: SessionLogRecord) -> Result<(), OrchestratorError> {
        self.log.append(record).map_err(|e| OrchestratorError::Log(e.to_string()))
    }

    /// Serves one user request to completion or failure.
    pub fn run_request(&mut self, text: &str) -> SessionOutcome {
        if self.session.state == SessionState::Done {
            return self.fail_before_start(OrchestratorError::SessionClosed);
        }
        let request = match self.session.make_request(text) {
            Ok(r) => r,
            Err(_) => return self.fail_before_start(OrchestratorError::EmptyRequest),
        };
        self.session.request_queue.push_back(request.clone());
        self.session.begin_request();
        let start_phase = self.session.current_phase();
        self.emit(EventKind::RoundStarted, json!({ "request_id": request.id, "text": request.text }));

        let result = self.drive(&request);
        self.session.request_queue.pop_front();
        let outcome = SessionOutcome {
            succeeded: result.is_ok(),
            steps: self.session.step_count() - self.session.request_start_step(),
            phases: self.session.current_phase() - start_phase,
            failure_reason: result.as_ref().err().map(|e| e.code().to_string()),
        };
        match &result {
            Ok(()) => {
                self.set_state(SessionState::AwaitingUser);
                self.emit(
                    EventKind::RequestCompleted,
                    json!({ "request_id": request.id, "steps": outcome.steps, "phases": outcome.phases }),
                );
            }
            Err(e) => {
                tracing::info!(error = %e, "request failed");
                self.set_state(SessionState::Failed);
                self.emit(
                    EventKind::RequestFailed,
                    json!({
                        "request_id": request.id,
                        "steps": outcome.steps,
                        "phases": outcome.phases,
                        "failure_reason": e.code(),
                        "detail": e.to_string(),
                    }),
                );
            }
        }
        outcome
    }

    fn fail_before_start(&mut self, e: OrchestratorError) -> SessionOutcome {
        self.emit(EventKind::RoundStarted, json!({ "request_id": null, "text": null }));
        self.emit(
            EventKind::RequestFailed,
            json!({ "steps": 0, "phases": 0, "failure_reason": e.code(), "detail": e.to_string() }),
        );
        SessionOutcome { succeeded: false, steps: 0, phases: 0, failure_reason: Some(e.code().to_string()) }
    }

    fn check_step_cap(&self) -> Result<(), OrchestratorError> {
        let used = self.session.step_count() - self.session.request_start_step();
        if used >= self.limits.max_steps_per_request {
            return Err(OrchestratorError::StepLimitExceeded(used));
        }
        Ok(())
    }

    fn settings(&self) -> AgentSettings {
        AgentSettings { parse_retries: self.limits.parse_retries, ..self.settings.clone() }
    }

    fn drive(&mut self, request: &UserRequest) -> Result<(), OrchestratorError> {
        let start_phase = self.session.current_phase();
        loop {
            self.check_step_cap()?;
            self.set_state(SessionState::SelectingApp);
            let step = self.session.step_count();
            let settings = self.settings();
            if self.screenshots.is_some() {
                let desktop = self.backend.capture_desktop()?;
                self.store(step, "desktop", &desktop);
            }
            let sel = select_application(
                &mut self.session,
                request,
                self.backend.as_ref(),
                self.adapter.as_mut(),
                &settings,
            )?;
            let selection = sel.app.as_ref().map(|a| a.name.clone()).unwrap_or_default();
            self.emit(
                EventKind::DecisionMade,
                json!({
                    "agent": "app",
                    "step_index": step,
                    "status": sel.decision.status,
                    "selection": selection,
                    "thoughts": sel.decision.thoughts,
                    "plan": sel.decision.global_plan,
                    "comment": sel.decision.comment,
                    "prompts": sel.prompts,
                    "counts_as_step": true,
                }),
            );
            self.write_log(SessionLogRecord {
                step_index: step,
                phase: self.session.current_phase(),
                agent: AgentKind::App,
                status: sel.decision.status,
                selection,
                function: String::new(),
                result_digest: String::new(),
                sensitive: false,
                confirmed: None,
                executed: false,
            })?;
            let Some(app) = sel.app else {
                return Ok(());
            };
            self.emit(
                EventKind::AppSelected,
                json!({ "app_id": app.app_id, "name": app.name, "phase": self.session.current_phase() }),
            );
            let phases = self.session.current_phase() - start_phase;
            if phases > self.limits.max_phases_per_request {
                return Err(OrchestratorError::PhaseLimitExceeded(phases));
            }
            self.backend.focus_application(&app.app_id)?;
            match self.act_phase(request, &app)? {
                PhaseEnd::Finish => return Ok(()),
                PhaseEnd::Switch => {
                    self.emit(
                        EventKind::PhaseSwitched,
                        json!({ "from_app": app.app_id, "phase": self.session.current_phase() }),
                    );
                }
            }
        }
    }

    fn observed(&self, ctx: &StepContext) {
        let step = ctx.label_map.step_index;
        self.emit(
            EventKind::StepObserved,
            json!({
                "step_index": step,
                "app_id": ctx.app_id,
                "redo": ctx.redo_count,
                "map_id": [step, ctx.redo_count],
                "controls_seen": ctx.raw_count,
                "labels": ctx.label_map.entries,
                "titles": ctx.controls.iter().map(|c| c.title.clone()).collect::<Vec<_>>(),
            }),
        );
        if ctx.redo_count == 0 {
            self.store(step, "previous", &ctx.previous_image);
            self.store(step, "clean", &ctx.clean_image);
            self.store(step, "annotated", &ctx.annotated_image);
        } else {
            self.store(step, &format!("refined{}", ctx.redo_count), &ctx.annotated_image);
        }
    }

    fn decided(&self, ctx: &StepContext, decision: &ActAgentDecision, prompts: u32, counts: bool) {
        self.emit(
            EventKind::DecisionMade,
            json!({
                "agent": "act",
                "step_index": ctx.label_map.step_index,
                "map_id": [ctx.label_map.step_index, ctx.redo_count],
                "status": decision.status,
                "label": decision.selected_control_label,
                "function": decision.function,
                "observation": decision.observation,
                "thoughts": decision.thoughts,
                "plan": decision.local_plan,
                "comment": decision.comment,
                "prompts": prompts,
                "counts_as_step": counts,
            }),
        );
    }

    /// Finishes a counted act step: memory entry plus session log line.
    fn close_step(
        &mut self,
        decision: &ActAgentDecision,
        control: Option<&ControlInfo>,
        result: &str,
        sensitive: bool,
        confirmed: Option<bool>,
        executed: bool,
    ) -> Result<(), OrchestratorError> {
        let step = self.session.step_count();
        record_step(&mut self.session, decision, control, result)?;
        let function = match decision.status {
            AgentStatus::Continue | AgentStatus::Pending => decision.function.name.clone(),
            _ => String::new(),
        };
        self.write_log(SessionLogRecord {
            step_index: step,
            phase: self.session.current_phase(),
            agent: AgentKind::Act,
            status: decision.status,
            selection: control.map(|c| c.title.clone()).unwrap_or_default(),
            function,
            result_digest: result_digest(result),
            sensitive,
            confirmed,
            executed,
        })
    }

    fn act_phase(&mut self, request: &UserRequest, app: &AppInfo) -> Result<PhaseEnd, OrchestratorError> {
        let mut previous: Option<PreviousStep> = None;
        loop {
            self.check_step_cap()?;
            self.set_state(SessionState::Acting);
            let step = self.session.step_count();
            let mut ctx =
                observe(self.backend.as_ref(), &app.app_id, step, previous.as_ref(), &self.filter, &self.engine.palette)?;
            self.observed(&ctx);
            let settings = self.settings();
            let sel = loop {
                let sel = select_action(
                    &ctx,
                    &mut self.session,
                    request,
                    self.adapter.as_mut(),
                    &settings,
                    self.engine.registry.specs(),
                    &self.filter,
                )?;
                if sel.decision.status != AgentStatus::Screenshot {
                    break sel;
                }
                self.decided(&ctx, &sel.decision, sel.prompts, false);
                ctx = handle_screenshot_redo(
                    &ctx,
                    &sel.decision,
                    &self.engine.palette,
                    self.limits.screenshot_redos_per_step,
                )?;
                self.observed(&ctx);
            };
            self.decided(&ctx, &sel.decision, sel.prompts, true);
            let decision = sel.decision;
            let control = match (decision.status, sel.control) {
                (AgentStatus::Finish, _) => {
                    self.close_step(&decision, None, "", false, None, false)?;
                    return Ok(PhaseEnd::Finish);
                }
                (AgentStatus::AppSelection, _) => {
                    self.close_step(&decision, None, "", false, None, false)?;
                    return Ok(PhaseEnd::Switch);
                }
                (_, Some(c)) => c,
                (status, None) => unreachable!("select_action binds a control for {status}"),
            };

            if let Err(e) = self.engine.check(&decision, &control) {
                self.close_step(&decision, Some(&control), &format!("error: {e}"), false, None, false)?;
                return Err(e.into());
            }
            let verdict = classify_sensitivity(&decision, &control);
            let confirmation = if verdict.sensitive {
                self.set_state(SessionState::AwaitingConfirmation);
                let req = ConfirmationRequest {
                    step_index: step,
                    function: decision.function.name.clone(),
                    control_title: control.title.clone(),
                    category: verdict.category,
                    reason: verdict.reason.clone(),
                };
                self.emit(
                    EventKind::ConfirmationRequested,
                    json!({
                        "step_index": step,
                        "summary": req.summary(),
                        "function": req.function,
                        "control_title": req.control_title,
                        "category": req.category,
                        "reason": req.reason,
                    }),
                );
                let approved = self.gate.decide(&req);
                self.emit(EventKind::ConfirmationResolved, json!({ "step_index": step, "approved": approved }));
                self.set_state(SessionState::Acting);
                Some(approved)
            } else {
                None
            };

            let before = self.backend.state_hash();
            let outcome =
                self.engine.dispatch(self.backend.as_mut(), &app.app_id, &decision, &control, confirmation);
            let after = self.backend.state_hash();
            let outcome = match outcome {
                Ok(o) => o,
                Err(e) => {
                    self.close_step(&decision, Some(&control), &format!("error: {e}"), verdict.sensitive, confirmation, false)?;
                    return Err(e.into());
                }
            };
            self.emit(
                EventKind::ActionExecuted,
                json!({
                    "step_index": step,
                    "map_id": [ctx.label_map.step_index, ctx.redo_count],
                    "label": decision.selected_control_label,
                    "control_id": control.control_id,
                    "control_title": control.title,
                    "function": decision.function,
                    "executed": outcome.executed,
                    "sensitive": outcome.verdict.sensitive,
                    "confirmed": outcome.confirmed,
                    "ok": outcome.result.ok,
                    "payload": outcome.result.payload,
                    "state_changed": outcome.result.state_changed,
                    "state_before": before,
                    "state_after": after,
                }),
            );
            self.close_step(
                &decision,
                Some(&control),
                &outcome.result.payload,
                outcome.verdict.sensitive,
                outcome.confirmed,
                outcome.executed,
            )?;
            previous = Some(PreviousStep { clean_image: ctx.clean_image, control: Some(control) });
        }
    }

    /// Reads requests line by line until `quit`/`exit` or end of input,
    /// writing one outcome line per request. Memory carries across requests.
    pub fn interactive_loop(&mut self, input: impl BufRead, mut output: impl Write) {
        for line in input.lines() {
            let Ok(line) = line else { break };
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            if matches!(text, "quit" | "exit") {
                break;
            }
            let outcome = self.run_request(text);
            let line = serde_json::to_string(&outcome).unwrap_or_default();
            if writeln!(output, "{line}").and_then(|_| output.flush()).is_err() {
                break;
            }
        }
        self.set_state(SessionState::Done);
    }
}
