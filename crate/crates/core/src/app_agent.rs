//! Application selection agent.

use thiserror::Error;

use crate::annotate::AnnotateError;
use crate::backend::{AppInfo, BackendError, DesktopBackend};
use crate::bridge::{
    assemble_appagent_prompt, parse_appagent_response, AppAgentDecision, BridgeError, ModelAdapter, Prompt,
};
use crate::filter::FilterError;
use crate::session::{AgentStatus, MemoryEntry, PlanKind, Session, SessionError, UserRequest};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("NO_APPLICATIONS")]
    NoApplications,
    #[error("UNKNOWN_APP_LABEL: {0}")]
    UnknownAppLabel(String),
    #[error("UNKNOWN_CONTROL_LABEL: {0}")]
    UnknownControlLabel(String),
    #[error("REDO_EXHAUSTED")]
    RedoExhausted,
    #[error("MODEL_FAILURE: {0}")]
    ModelFailure(BridgeError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

impl AgentError {
    pub fn code(&self) -> &'static str {
        match self {
            AgentError::NoApplications => "NO_APPLICATIONS",
            AgentError::UnknownAppLabel(_) => "UNKNOWN_APP_LABEL",
            AgentError::UnknownControlLabel(_) => "UNKNOWN_CONTROL_LABEL",
            AgentError::RedoExhausted => "REDO_EXHAUSTED",
            AgentError::ModelFailure(_) => "MODEL_FAILURE",
            AgentError::Backend(e) => e.code(),
            AgentError::Filter(FilterError::UnknownLabel(_)) => "UNKNOWN_LABEL",
            AgentError::Filter(_) => "FILTER_CONFIG",
            AgentError::Annotate(_) => "BBOX_OUT_OF_BOUNDS",
            AgentError::Session(_) => "SESSION",
        }
    }
}

/// Knobs shared by both agents.
#[derive(Debug, Clone)]
pub struct AgentSettings {
    pub app_examples: Vec<String>,
    pub act_examples: Vec<String>,
    pub memory_window: usize,
    /// Re-asks after an unparsable response.
    pub parse_retries: u32,
}

impl Default for AgentSettings {
    fn default() -> Self {
        use crate::bridge::default_examples;
        use crate::session::AgentKind;
        AgentSettings {
            app_examples: default_examples(AgentKind::App),
            act_examples: default_examples(AgentKind::Act),
            memory_window: crate::session::DEFAULT_MEMORY_WINDOW,
            parse_retries: 2,
        }
    }
}

/// Completes `prompt` and parses the answer, re-asking with the parser error
/// appended up to `retries` times. Counts every completion in `prompts`.
pub(crate) fn ask<T>(
    adapter: &mut dyn ModelAdapter,
    prompt: &mut Prompt,
    parse: fn(&str) -> Result<T, BridgeError>,
    retries: u32,
    prompts: &mut u32,
) -> Result<T, AgentError> {
    let mut attempt = 0;
    loop {
        *prompts += 1;
        let text = adapter.complete(prompt).map_err(AgentError::ModelFailure)?;
        match parse(&text) {
            Ok(v) => return Ok(v),
            Err(e) if e.is_parse_error() && attempt < retries => {
                tracing::debug!(error = %e, "re-prompting after parse failure");
                prompt.retry_notes.push(e.retry_note());
                attempt += 1;
            }
            Err(e) => return Err(AgentError::ModelFailure(e)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AppSelection {
    pub decision: AppAgentDecision,
    /// The resolved application; `None` when the agent finished.
    pub app: Option<AppInfo>,
    /// Completions requested for this decision, retries included.
    pub prompts: u32,
}

fn resolve<'a>(apps: &'a [AppInfo], label: &str) -> Option<&'a AppInfo> {
    let idx: usize = label.trim().parse().ok()?;
    apps.get(idx.checked_sub(1)?)
}

/// Chooses the application for the next phase.
///
/// On CONTINUE a new phase begins and its global plan is recorded. Every
/// call appends one memory entry.
pub fn select_application(
    session: &mut Session,
    request: &UserRequest,
    backend: &dyn DesktopBackend,
    adapter: &mut dyn ModelAdapter,
    settings: &AgentSettings,
) -> Result<AppSelection, AgentError> {
    let desktop = backend.capture_desktop()?;
    let apps = backend.list_applications()?;
    let mut prompt =
        assemble_appagent_prompt(request, session, &apps, desktop, &settings.app_examples, settings.memory_window);
    let mut prompts = 0;
    let mut decision = ask(adapter, &mut prompt, parse_appagent_response, settings.parse_retries, &mut prompts)?;

    let mut app = None;
    if decision.status == AgentStatus::Continue {
        if apps.is_empty() {
            return Err(AgentError::NoApplications);
        }
        app = resolve(&apps, &decision.selected_app_label).cloned();
        if app.is_none() {
            prompt.retry_notes.push(format!(
                "Label {:?} is not in the application list; choose one of 1..{}.",
                decision.selected_app_label,
                apps.len()
            ));
            decision = ask(adapter, &mut prompt, parse_appagent_response, settings.parse_retries, &mut prompts)?;
            if decision.status == AgentStatus::Continue {
                app = Some(
                    resolve(&apps, &decision.selected_app_label)
                        .cloned()
                        .ok_or_else(|| AgentError::UnknownAppLabel(decision.selected_app_label.clone()))?,
                );
            }
        }
    }

    let action_summary = match &app {
        Some(a) => {
            session.begin_phase();
            session.push_plan(PlanKind::Global, decision.global_plan.clone())?;
            format!("select-app: {}", a.name)
        }
        None => "select-app: none (FINISH)".to_string(),
    };
    session.append_memory(MemoryEntry {
        step_index: session.step_count(),
        phase_index: session.current_phase(),
        thoughts: decision.thoughts.clone(),
        action_summary,
        execution_result: String::new(),
        comment: decision.comment.clone(),
    })?;
    Ok(AppSelection { decision, app, prompts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Scenario, SimDesktop};
    use crate::bridge::{PolicyTable, ScriptedPolicy};

    fn desktop() -> SimDesktop {
        SimDesktop::new(
            Scenario::from_json(
                r#"{"applications": [
                {"id": "mail", "name": "Mail", "kind": "mail client", "window": [0,0,200,100]},
                {"id": "editor", "name": "Editor", "kind": "document editor", "window": [0,0,200,100]}
            ]}"#,
            )
            .unwrap(),
        )
    }

    fn policy(json: &str) -> ScriptedPolicy {
        ScriptedPolicy::new(PolicyTable::from_json(json).unwrap())
    }

    #[test]
    fn selects_mail_for_email() {
        let mut s = Session::new("t");
        let r = s.make_request("send an email").unwrap();
        let mut p = policy(
            r#"{"rules": [{"agent": "app", "when": {"request_contains": ["email"]},
                 "respond": {"status": "CONTINUE", "select": "Mail", "plan": ["compose", "send"]}}]}"#,
        );
        let sel = select_application(&mut s, &r, &desktop(), &mut p, &AgentSettings::default()).unwrap();
        assert_eq!(sel.app.unwrap().app_id, "mail");
        assert_eq!(sel.decision.status, AgentStatus::Continue);
        assert_eq!(s.plan_history().len(), 1);
        assert_eq!(s.plan_history()[0].kind, PlanKind::Global);
        assert!(!s.plan_history()[0].steps.is_empty());
        assert_eq!(s.memory()[0].action_summary, "select-app: Mail");
        assert_eq!(s.current_phase(), 1);
    }

    #[test]
    fn bad_label_reprompts_once_then_fails() {
        let mut s = Session::new("t");
        let r = s.make_request("x").unwrap();
        let mut calls = 0;
        let mut adapter = |_: &Prompt| -> Result<String, BridgeError> {
            calls += 1;
            Ok(r#"{"Observation":"","Thoughts":"","SelectedApp":{"label":"9","name":"?"},"Status":"CONTINUE","Plan":[],"Comment":""}"#.into())
        };
        let err = select_application(&mut s, &r, &desktop(), &mut adapter, &AgentSettings::default()).unwrap_err();
        assert_eq!(err, AgentError::UnknownAppLabel("9".into()));
        assert_eq!(calls, 2);
        assert!(s.memory().is_empty());
    }

    #[test]
    fn finish_selects_nothing() {
        let mut s = Session::new("t");
        let r = s.make_request("x").unwrap();
        let mut p = policy(r#"{"rules": [{"agent": "app", "respond": {"status": "FINISH"}}]}"#);
        let sel = select_application(&mut s, &r, &desktop(), &mut p, &AgentSettings::default()).unwrap();
        assert!(sel.app.is_none());
        assert_eq!(sel.decision.status, AgentStatus::Finish);
        assert!(s.plan_history().is_empty());
        assert_eq!(s.memory().len(), 1);
    }

    #[test]
    fn parse_failures_are_retried_twice() {
        let mut s = Session::new("t");
        let r = s.make_request("x").unwrap();
        let mut seen_notes = Vec::new();
        let mut adapter = |p: &Prompt| -> Result<String, BridgeError> {
            seen_notes.push(p.retry_notes.len());
            Ok("not json".into())
        };
        let err = select_application(&mut s, &r, &desktop(), &mut adapter, &AgentSettings::default()).unwrap_err();
        assert_eq!(err.code(), "MODEL_FAILURE");
        assert_eq!(seen_notes, [0, 1, 2]);
    }
}
