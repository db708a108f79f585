use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::raster::{blit, control_fill, render_window};
use super::scenario::{AppSpec, Condition, ControlSpec, Effect, Scenario, DESKTOP_BACKGROUND};
use super::types::{AppInfo, ControlInfo, ControlKind, ControlType, ExecutionResult, FunctionCall, Image};
use super::{BackendError, BackendResult, DesktopBackend};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
struct ControlState {
    text: String,
    visible: bool,
    enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
struct AppState {
    view: Option<String>,
    description: String,
    controls: BTreeMap<String, ControlState>,
    outbox: Vec<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
struct DesktopState {
    focused: Option<String>,
    apps: BTreeMap<String, AppState>,
    deleted_files: BTreeSet<String>,
}

/// Deterministic simulated desktop driven by a [`Scenario`].
#[derive(Debug, Clone)]
pub struct SimDesktop {
    scenario: Scenario,
    state: DesktopState,
    /// `(app, control)` pairs read through GetText or Summary; not part of the state hash.
    reads: BTreeSet<(String, Option<String>)>,
}

impl SimDesktop {
    pub fn new(scenario: Scenario) -> Self {
        let apps = scenario
            .applications
            .iter()
            .map(|app| {
                let mut controls = BTreeMap::new();
                let mut stack: Vec<&ControlSpec> = app.controls.iter().collect();
                while let Some(c) = stack.pop() {
                    controls.insert(
                        c.id.clone(),
                        ControlState { text: c.text.clone(), visible: c.visible, enabled: c.enabled },
                    );
                    stack.extend(c.children.iter());
                }
                let state = AppState {
                    view: app.view.clone(),
                    description: app.description.clone(),
                    controls,
                    outbox: Vec::new(),
                };
                (app.id.clone(), state)
            })
            .collect();
        let focused = scenario.applications.iter().find(|a| a.focused).map(|a| a.id.clone());
        SimDesktop {
            scenario,
            state: DesktopState { focused, apps, deleted_files: BTreeSet::new() },
            reads: BTreeSet::new(),
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn focused(&self) -> Option<&str> {
        self.state.focused.as_deref()
    }

    pub fn outbox(&self, app_id: &str) -> &[BTreeMap<String, String>] {
        self.state.apps.get(app_id).map(|a| a.outbox.as_slice()).unwrap_or(&[])
    }

    pub fn deleted_files(&self) -> &BTreeSet<String> {
        &self.state.deleted_files
    }

    pub fn control_text(&self, app_id: &str, control_id: &str) -> Option<&str> {
        self.state.apps.get(app_id)?.controls.get(control_id).map(|c| c.text.as_str())
    }

    /// Digest of state plus the read log; distinguishes search states that
    /// differ only in what has been read.
    pub fn search_key(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.state).expect("state serializes"));
        h.update(serde_json::to_vec(&self.reads).expect("reads serialize"));
        hex::encode(h.finalize())
    }

    pub fn evaluate(&self, cond: &Condition) -> bool {
        match cond {
            Condition::OutboxCount { app, at_least } => self.outbox(app).len() >= *at_least,
            Condition::OutboxContains { app, field, text } => self
                .outbox(app)
                .iter()
                .any(|m| m.get(field).is_some_and(|v| v.contains(text.as_str()))),
            Condition::ControlText { app, control, contains } => {
                self.control_text(app, control).is_some_and(|t| t.contains(contains.as_str()))
            }
            Condition::FileDeleted(name) => self.state.deleted_files.contains(name),
            Condition::View { app, is } => {
                self.state.apps.get(app).and_then(|a| a.view.as_deref()) == Some(is.as_str())
            }
            Condition::Read { app, control } => self.reads.contains(&(app.clone(), control.clone())),
            Condition::Not(inner) => !self.evaluate(inner),
        }
    }

    fn app_spec(&self, app_id: &str) -> BackendResult<&AppSpec> {
        self.scenario.app(app_id).ok_or_else(|| BackendError::UnknownApp(app_id.to_string()))
    }

    fn require_focus(&self, app_id: &str) -> BackendResult<&AppSpec> {
        let spec = self.app_spec(app_id)?;
        if self.state.focused.as_deref() != Some(app_id) {
            return Err(BackendError::NotFocused(app_id.to_string()));
        }
        Ok(spec)
    }

    /// Visible controls in pre-order, paired with their specs.
    fn visible<'a>(&'a self, spec: &'a AppSpec) -> Vec<(&'a ControlSpec, &'a ControlState)> {
        fn walk<'a>(
            controls: &'a [ControlSpec],
            app: &'a AppState,
            out: &mut Vec<(&'a ControlSpec, &'a ControlState)>,
        ) {
            for c in controls {
                let st = &app.controls[&c.id];
                let in_view = c.view.is_none() || c.view == app.view;
                if st.visible && in_view {
                    out.push((c, st));
                    walk(&c.children, app, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&spec.controls, &self.state.apps[&spec.id], &mut out);
        out
    }

    fn apply(&mut self, app_id: &str, effect: &Effect, call: &FunctionCall) {
        let app = self.state.apps.get_mut(app_id).expect("validated app");
        match effect {
            Effect::SetText { control, text } => {
                let mut value = text.clone();
                for (k, v) in &call.args {
                    value = value.replace(&format!("{{arg:{k}}}"), v);
                }
                app.controls.get_mut(control).expect("validated control").text = value;
            }
            Effect::Reveal(ids) => ids.iter().for_each(|id| app.controls.get_mut(id).expect("validated").visible = true),
            Effect::Hide(ids) => ids.iter().for_each(|id| app.controls.get_mut(id).expect("validated").visible = false),
            Effect::Enable(ids) => ids.iter().for_each(|id| app.controls.get_mut(id).expect("validated").enabled = true),
            Effect::Disable(ids) => {
                ids.iter().for_each(|id| app.controls.get_mut(id).expect("validated").enabled = false)
            }
            Effect::SwitchView(v) => app.view = Some(v.clone()),
            Effect::Describe(d) => app.description = d.clone(),
            Effect::AppendOutbox(fields) => {
                let msg = fields.iter().map(|(f, c)| (f.clone(), app.controls[c].text.clone())).collect();
                app.outbox.push(msg);
            }
            Effect::DeleteFile(name) => {
                self.state.deleted_files.insert(name.clone());
            }
        }
    }
}

fn compatible(function: &str, kind: &ControlKind, spec: &ControlSpec) -> bool {
    match function {
        "SetText" => kind.known().is_some_and(ControlType::is_text_input),
        "Scroll" => spec.scrollable || kind.known() == Some(ControlType::ScrollBar),
        _ => true,
    }
}

impl DesktopBackend for SimDesktop {
    fn list_applications(&self) -> BackendResult<Vec<AppInfo>> {
        Ok(self
            .scenario
            .applications
            .iter()
            .map(|a| AppInfo {
                app_id: a.id.clone(),
                name: a.name.clone(),
                kind: a.kind.clone(),
                focused: self.state.focused.as_deref() == Some(a.id.as_str()),
            })
            .collect())
    }

    fn focus_application(&mut self, app_id: &str) -> BackendResult<ExecutionResult> {
        self.app_spec(app_id)?;
        if self.state.focused.as_deref() == Some(app_id) {
            return Ok(ExecutionResult::unchanged(""));
        }
        self.state.focused = Some(app_id.to_string());
        Ok(ExecutionResult::changed(""))
    }

    fn enumerate_controls(&self, app_id: &str) -> BackendResult<Vec<ControlInfo>> {
        let spec = self.require_focus(app_id)?;
        Ok(self
            .visible(spec)
            .into_iter()
            .map(|(c, st)| ControlInfo {
                control_id: c.id.clone(),
                kind: c.kind.clone(),
                title: c.title.clone(),
                bbox: c.bbox,
                enabled: st.enabled,
                text: st.text.clone(),
            })
            .collect())
    }

    fn capture_desktop(&self) -> BackendResult<Image> {
        let [w, h] = self.scenario.desktop;
        let mut img = Image::filled(w, h, DESKTOP_BACKGROUND);
        let mut order: Vec<&AppSpec> = self.scenario.applications.iter().collect();
        // focused window on top
        order.sort_by_key(|a| self.state.focused.as_deref() == Some(a.id.as_str()));
        for app in order {
            let win = self.render(app);
            blit(&mut img, &win, app.window.left, app.window.top);
        }
        Ok(img)
    }

    fn capture_window(&self, app_id: &str) -> BackendResult<Image> {
        let spec = self.require_focus(app_id)?;
        Ok(self.render(spec))
    }

    fn execute(&mut self, app_id: &str, control_id: &str, call: &FunctionCall) -> BackendResult<ExecutionResult> {
        let spec = self.require_focus(app_id)?;
        let (cspec, cstate) = self
            .visible(spec)
            .into_iter()
            .find(|(c, _)| c.id == control_id)
            .ok_or_else(|| BackendError::UnknownControl(control_id.to_string()))?;
        if !cstate.enabled {
            return Err(BackendError::ControlDisabled(control_id.to_string()));
        }
        if !compatible(&call.name, &cspec.kind, cspec) {
            return Err(BackendError::FunctionTypeMismatch {
                function: call.name.clone(),
                kind: cspec.kind.name().to_string(),
            });
        }
        let transition = spec.transitions.iter().find(|t| t.matches(control_id, &call.name, &call.args)).cloned();
        let before = self.state.clone();

        if call.name == "SetText" {
            let text = call.arg("text").unwrap_or_default().to_string();
            let app = self.state.apps.get_mut(app_id).expect("validated app");
            app.controls.get_mut(control_id).expect("visible control").text = text;
        }
        if let Some(t) = &transition {
            for e in &t.effects {
                self.apply(app_id, e, call);
            }
        }
        let payload = if call.name == "GetText" {
            self.reads.insert((app_id.to_string(), Some(control_id.to_string())));
            self.state.apps[app_id].controls[control_id].text.clone()
        } else {
            String::new()
        };
        Ok(ExecutionResult { ok: true, payload, state_changed: self.state != before })
    }

    fn describe(&mut self, app_id: &str, control_id: Option<&str>) -> BackendResult<String> {
        let spec = self.require_focus(app_id)?;
        let text = match control_id {
            Some(cid) => {
                let (c, _) = self
                    .visible(spec)
                    .into_iter()
                    .find(|(c, _)| c.id == cid)
                    .ok_or_else(|| BackendError::UnknownControl(cid.to_string()))?;
                c.description.clone()
            }
            None => None,
        };
        let text = text.unwrap_or_else(|| self.state.apps[app_id].description.clone());
        self.reads.insert((app_id.to_string(), control_id.map(str::to_string)));
        if control_id.is_some() {
            // a control-level summary also counts as having looked at the window
            self.reads.insert((app_id.to_string(), None));
        }
        Ok(text)
    }

    fn state_hash(&self) -> Option<String> {
        let bytes = serde_json::to_vec(&self.state).expect("state serializes");
        Some(hex::encode(Sha256::digest(&bytes)))
    }

    fn check_hook(&self, name: &str) -> Option<bool> {
        let conds = self.scenario.success_hooks.get(name)?;
        Some(conds.iter().all(|c| self.evaluate(c)))
    }
}

impl SimDesktop {
    fn render(&self, spec: &AppSpec) -> Image {
        let fills: Vec<_> = self
            .visible(spec)
            .into_iter()
            .map(|(c, _)| (c.bbox, c.fill.unwrap_or_else(|| control_fill(&c.id))))
            .collect();
        render_window(spec.window.width, spec.window.height, &fills)
    }
}
