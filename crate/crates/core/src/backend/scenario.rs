//! Declarative simulated-desktop files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::types::{ControlKind, Rect};

pub const DESKTOP_BACKGROUND: [u8; 3] = [24, 28, 36];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario syntax error: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    /// Desktop size in pixels.
    #[serde(default = "default_desktop")]
    pub desktop: [u32; 2],
    #[serde(default)]
    pub applications: Vec<AppSpec>,
    /// Named text blobs; any text or description written as `@name` is replaced by the asset.
    #[serde(default)]
    pub assets: BTreeMap<String, String>,
    /// Named predicates over the desktop state; all conditions must hold.
    #[serde(default)]
    pub success_hooks: BTreeMap<String, Vec<Condition>>,
}

fn default_desktop() -> [u32; 2] {
    [1280, 800]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppSpec {
    pub id: String,
    pub name: String,
    pub kind: String,
    #[serde(default)]
    pub focused: bool,
    /// Window placement on the desktop; width and height are the window size.
    pub window: Rect,
    /// What the window shows, as returned by `Summary`.
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub view: Option<String>,
    #[serde(default)]
    pub controls: Vec<ControlSpec>,
    #[serde(default)]
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: ControlKind,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub text: String,
    pub bbox: Rect,
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "yes")]
    pub visible: bool,
    /// Only shown while the app is in this view.
    #[serde(default)]
    pub view: Option<String>,
    #[serde(default)]
    pub scrollable: bool,
    /// Description returned by `Summary` when this control is targeted.
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub fill: Option<[u8; 3]>,
    #[serde(default)]
    pub children: Vec<ControlSpec>,
}

/// `(control, function, argument patterns) → effects`. Patterns are exact
/// strings or `*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub control: String,
    pub function: String,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
    pub effects: Vec<Effect>,
}

impl Transition {
    pub fn matches(&self, control: &str, function: &str, args: &BTreeMap<String, String>) -> bool {
        self.control == control
            && self.function == function
            && self.args.iter().all(|(k, pat)| match args.get(k) {
                Some(v) => pat == "*" || pat == v,
                None => false,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Effect {
    /// `{arg:NAME}` in `text` is replaced by the call argument.
    SetText { control: String, text: String },
    Reveal(Vec<String>),
    Hide(Vec<String>),
    Enable(Vec<String>),
    Disable(Vec<String>),
    SwitchView(String),
    /// Sets what `Summary` reports for the window.
    Describe(String),
    /// Appends a message built from the listed controls' texts (field → control id).
    AppendOutbox(BTreeMap<String, String>),
    DeleteFile(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Condition {
    OutboxCount { app: String, at_least: usize },
    OutboxContains { app: String, field: String, text: String },
    ControlText { app: String, control: String, contains: String },
    FileDeleted(String),
    View { app: String, is: String },
    /// The control (or the window, when `control` is absent) was read via GetText or Summary.
    Read { app: String, #[serde(default)] control: Option<String> },
    Not(Box<Condition>),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let mut scenario: Scenario = serde_json::from_str(text)?;
        scenario.resolve_assets()?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn app(&self, app_id: &str) -> Option<&AppSpec> {
        self.applications.iter().find(|a| a.id == app_id)
    }

    fn resolve_assets(&mut self) -> Result<(), ScenarioError> {
        let assets = self.assets.clone();
        let resolve = |s: &mut String| -> Result<(), ScenarioError> {
            if let Some(name) = s.strip_prefix('@') {
                match assets.get(name) {
                    Some(v) => *s = v.clone(),
                    None => return Err(ScenarioError::Invalid(format!("unknown asset @{name}"))),
                }
            }
            Ok(())
        };
        fn walk(
            controls: &mut [ControlSpec],
            f: &dyn Fn(&mut String) -> Result<(), ScenarioError>,
        ) -> Result<(), ScenarioError> {
            for c in controls {
                f(&mut c.text)?;
                if let Some(d) = c.description.as_mut() {
                    f(d)?;
                }
                walk(&mut c.children, f)?;
            }
            Ok(())
        }
        for app in &mut self.applications {
            resolve(&mut app.description)?;
            walk(&mut app.controls, &resolve)?;
            for t in &mut app.transitions {
                for e in &mut t.effects {
                    match e {
                        Effect::SetText { text, .. } => resolve(text)?,
                        Effect::Describe(text) => resolve(text)?,
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        let mut app_ids = BTreeSet::new();
        let mut focused = 0;
        for app in &self.applications {
            if !app_ids.insert(app.id.as_str()) {
                return invalid(format!("duplicate application id {}", app.id));
            }
            if app.focused {
                focused += 1;
            }
            if app.window.width == 0 || app.window.height == 0 {
                return invalid(format!("application {} has an empty window", app.id));
            }
            let mut ids = BTreeSet::new();
            let mut stack: Vec<&ControlSpec> = app.controls.iter().collect();
            while let Some(c) = stack.pop() {
                if !ids.insert(c.id.as_str()) {
                    return invalid(format!("duplicate control id {} in {}", c.id, app.id));
                }
                if !c.bbox.fits_within(app.window.width, app.window.height) {
                    return invalid(format!("control {} bbox outside window of {}", c.id, app.id));
                }
                stack.extend(c.children.iter());
            }
            for t in &app.transitions {
                if !ids.contains(t.control.as_str()) {
                    return invalid(format!("transition targets unknown control {} in {}", t.control, app.id));
                }
                for e in &t.effects {
                    let targets: Vec<&String> = match e {
                        Effect::SetText { control, .. } => vec![control],
                        Effect::Reveal(v) | Effect::Hide(v) | Effect::Enable(v) | Effect::Disable(v) => v.iter().collect(),
                        Effect::AppendOutbox(fields) => fields.values().collect(),
                        Effect::SwitchView(_) | Effect::Describe(_) | Effect::DeleteFile(_) => vec![],
                    };
                    if let Some(bad) = targets.into_iter().find(|id| !ids.contains(id.as_str())) {
                        return invalid(format!("effect targets unknown control {bad} in {}", app.id));
                    }
                }
            }
        }
        if focused > 1 {
            return invalid("more than one application is focused".into());
        }
        for (name, conds) in &self.success_hooks {
            for c in conds {
                self.validate_condition(name, c)?;
            }
        }
        Ok(())
    }

    fn validate_condition(&self, hook: &str, cond: &Condition) -> Result<(), ScenarioError> {
        let app = match cond {
            Condition::OutboxCount { app, .. }
            | Condition::OutboxContains { app, .. }
            | Condition::ControlText { app, .. }
            | Condition::View { app, .. }
            | Condition::Read { app, .. } => Some(app),
            Condition::FileDeleted(_) => None,
            Condition::Not(inner) => return self.validate_condition(hook, inner),
        };
        if let Some(app) = app {
            if self.app(app).is_none() {
                return Err(ScenarioError::Invalid(format!("hook {hook} references unknown application {app}")));
            }
        }
        Ok(())
    }
}
