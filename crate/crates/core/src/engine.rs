//! Function dispatch onto the backend, the custom action registry and the
//! sensitive-action safeguard.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{annotate, Palette};
use crate::backend::{BackendError, ControlInfo, ControlType, DesktopBackend, ExecutionResult};
use crate::bridge::ActAgentDecision;
use crate::session::AgentStatus;

pub const BUILTIN_ACTIONS: [&str; 6] = ["Click", "SetText", "Annotate", "Summary", "GetText", "Scroll"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("DUPLICATE_NAME: {0}")]
    DuplicateName(String),
    #[error("RESERVED_NAME: {0}")]
    ReservedName(String),
    #[error("UNREGISTERED_FUNCTION: {0}")]
    UnregisteredFunction(String),
    #[error("FUNCTION_TYPE_MISMATCH: {function} on {kind}")]
    FunctionTypeMismatch { function: String, kind: String },
    #[error("MISSING_ARGUMENT: {function} requires {arg}")]
    MissingArgument { function: String, arg: String },
    #[error("CONFIRMATION_REQUIRED: {0}")]
    ConfirmationRequired(String),
    #[error("status {0} does not dispatch a function")]
    NotDispatchable(AgentStatus),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::DuplicateName(_) => "DUPLICATE_NAME",
            EngineError::ReservedName(_) => "RESERVED_NAME",
            EngineError::UnregisteredFunction(_) => "UNREGISTERED_FUNCTION",
            EngineError::FunctionTypeMismatch { .. } => "FUNCTION_TYPE_MISMATCH",
            EngineError::MissingArgument { .. } => "MISSING_ARGUMENT",
            EngineError::ConfirmationRequired(_) => "CONFIRMATION_REQUIRED",
            EngineError::NotDispatchable(_) => "NOT_DISPATCHABLE",
            EngineError::Backend(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArgSpec {
    #[serde(rename = "type", default = "string_tag")]
    pub type_tag: String,
    #[serde(default)]
    pub required: bool,
}

fn string_tag() -> String {
    "string".into()
}

fn all_types() -> BTreeSet<ControlType> {
    ControlType::ALL.into_iter().collect()
}

/// Description of a callable function, as shown to the action agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub name: String,
    pub purpose: String,
    #[serde(default)]
    pub args: BTreeMap<String, ArgSpec>,
    #[serde(default)]
    pub returns: String,
    #[serde(default = "all_types")]
    pub compatible_types: BTreeSet<ControlType>,
    #[serde(default)]
    pub demonstration: Option<String>,
    #[serde(default)]
    pub builtin: bool,
}

impl ActionSpec {
    fn builtin(name: &str, purpose: &str, args: &[(&str, bool)], returns: &str, types: &[ControlType]) -> Self {
        ActionSpec {
            name: name.into(),
            purpose: purpose.into(),
            args: args.iter().map(|(a, req)| (a.to_string(), ArgSpec { type_tag: "string".into(), required: *req })).collect(),
            returns: returns.into(),
            compatible_types: if types.is_empty() { all_types() } else { types.iter().copied().collect() },
            demonstration: None,
            builtin: true,
        }
    }

    /// One line of the prompt's function catalogue.
    pub fn prompt_line(&self) -> String {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|(n, a)| if a.required { format!("{n}: {}", a.type_tag) } else { format!("{n}?: {}", a.type_tag) })
            .collect();
        let mut line = format!("- {}({}): {}", self.name, args.join(", "), self.purpose);
        if !self.returns.is_empty() {
            line += &format!(" Returns {}.", self.returns);
        }
        if self.compatible_types.len() < ControlType::ALL.len() {
            let types: Vec<&str> = self.compatible_types.iter().map(|t| t.name()).collect();
            line += &format!(" Applies to: {}.", types.join(", "));
        }
        if let Some(demo) = &self.demonstration {
            line += &format!(" Example: {demo}");
        }
        line
    }
}

/// Builtins plus user-registered functions. Only grows.
#[derive(Debug, Clone)]
pub struct ActionRegistry {
    specs: Vec<ActionSpec>,
}

impl Default for ActionRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl ActionRegistry {
    pub fn new() -> Self {
        use ControlType::*;
        ActionRegistry {
            specs: vec![
                ActionSpec::builtin(
                    "Click",
                    "Click the control with the mouse (button: left|right, double: true|false).",
                    &[("button", false), ("double", false)],
                    "",
                    &[],
                ),
                ActionSpec::builtin("SetText", "Type text into an editable control.", &[("text", true)], "", &[Edit, Document, ComboBox]),
                ActionSpec::builtin(
                    "Annotate",
                    "Capture the window again and annotate the selected control.",
                    &[],
                    "a confirmation message",
                    &[],
                ),
                ActionSpec::builtin(
                    "Summary",
                    "Describe what the window shows, based on the clean screenshot.",
                    &[],
                    "a textual description",
                    &[],
                ),
                ActionSpec::builtin("GetText", "Read the text of the control.", &[], "the control text", &[]),
                ActionSpec::builtin(
                    "Scroll",
                    "Scroll a scroll bar or scrollable container to reveal hidden content (direction: up|down|left|right).",
                    &[("direction", false)],
                    "",
                    &[],
                ),
            ],
        }
    }

    pub fn register(&mut self, mut spec: ActionSpec) -> Result<(), EngineError> {
        if spec.builtin || BUILTIN_ACTIONS.contains(&spec.name.as_str()) {
            return Err(EngineError::ReservedName(spec.name));
        }
        if self.get(&spec.name).is_some() {
            return Err(EngineError::DuplicateName(spec.name));
        }
        spec.builtin = false;
        self.specs.push(spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ActionSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn specs(&self) -> &[ActionSpec] {
        &self.specs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SensitiveCategory {
    SendMessage,
    DeleteModifyFiles,
    CloseWindowApp,
    CameraMic,
    InstallUninstall,
    PrivateData,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitivityVerdict {
    pub sensitive: bool,
    pub category: Option<SensitiveCategory>,
    pub reason: String,
}

impl SensitivityVerdict {
    fn safe() -> Self {
        SensitivityVerdict { sensitive: false, category: None, reason: String::new() }
    }
}

struct SensitiveRule {
    category: SensitiveCategory,
    functions: &'static [&'static str],
    /// Empty means any type.
    types: &'static [ControlType],
    /// Whole-word phrases matched against the lowercased title.
    phrases: &'static [&'static str],
}

const SENSITIVE_RULES: &[SensitiveRule] = {
    use ControlType::*;
    &[
        SensitiveRule {
            category: SensitiveCategory::SendMessage,
            functions: &["Click"],
            types: &[Button, MenuItem, Hyperlink],
            phrases: &["send", "send now", "post", "reply all"],
        },
        SensitiveRule {
            category: SensitiveCategory::DeleteModifyFiles,
            functions: &["Click"],
            types: &[Button, MenuItem, ListItem, TreeItem],
            phrases: &["delete", "remove", "erase", "rename", "overwrite", "move to trash", "empty recycle bin"],
        },
        SensitiveRule {
            category: SensitiveCategory::CloseWindowApp,
            functions: &["Click"],
            types: &[Button, MenuItem, TabItem],
            phrases: &["close", "exit", "quit", "close window"],
        },
        SensitiveRule {
            category: SensitiveCategory::CameraMic,
            functions: &["Click"],
            types: &[],
            phrases: &["camera", "webcam", "microphone", "mic"],
        },
        SensitiveRule {
            category: SensitiveCategory::InstallUninstall,
            functions: &["Click"],
            types: &[],
            phrases: &["install", "uninstall", "setup"],
        },
        SensitiveRule {
            category: SensitiveCategory::PrivateData,
            functions: &["Click", "GetText"],
            types: &[],
            phrases: &["password", "passwords", "saved passwords", "browsing history", "history", "credentials"],
        },
    ]
};

fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

fn has_phrase(title_words: &[String], phrase: &str) -> bool {
    let p = words(phrase);
    !p.is_empty() && title_words.windows(p.len()).any(|w| w == p.as_slice())
}

/// Rule table OR agent-declared PENDING.
pub fn classify_sensitivity(decision: &ActAgentDecision, control: &ControlInfo) -> SensitivityVerdict {
    let title = words(&control.title);
    let ty = control.kind.known();
    for rule in SENSITIVE_RULES {
        let type_ok = rule.types.is_empty() || ty.is_some_and(|t| rule.types.contains(&t));
        if !type_ok || !rule.functions.contains(&decision.function.name.as_str()) {
            continue;
        }
        if let Some(p) = rule.phrases.iter().find(|p| has_phrase(&title, p)) {
            return SensitivityVerdict {
                sensitive: true,
                category: Some(rule.category),
                reason: format!("{} on {} titled {:?} matches {p:?}", decision.function.name, control.kind, control.title),
            };
        }
    }
    if decision.status == AgentStatus::Pending {
        return SensitivityVerdict { sensitive: true, category: None, reason: "agent-declared".into() };
    }
    SensitivityVerdict::safe()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchOutcome {
    pub result: ExecutionResult,
    pub verdict: SensitivityVerdict,
    pub executed: bool,
    pub confirmed: Option<bool>,
}

#[derive(Debug, Clone, Default)]
pub struct ActionEngine {
    pub registry: ActionRegistry,
    pub palette: Palette,
}

impl ActionEngine {
    pub fn new(registry: ActionRegistry) -> Self {
        ActionEngine { registry, palette: Palette::default() }
    }

    /// Checks that `decision` can be dispatched on `control` at all.
    pub fn check(&self, decision: &ActAgentDecision, control: &ControlInfo) -> Result<(), EngineError> {
        if !matches!(decision.status, AgentStatus::Continue | AgentStatus::Pending) {
            return Err(EngineError::NotDispatchable(decision.status));
        }
        let name = &decision.function.name;
        let spec = self.registry.get(name).ok_or_else(|| EngineError::UnregisteredFunction(name.clone()))?;
        if !control.kind.known().is_some_and(|t| spec.compatible_types.contains(&t)) {
            return Err(EngineError::FunctionTypeMismatch { function: name.clone(), kind: control.kind.name().to_string() });
        }
        if let Some((arg, _)) = spec.args.iter().find(|(a, s)| s.required && !decision.function.args.contains_key(*a)) {
            return Err(EngineError::MissingArgument { function: name.clone(), arg: arg.clone() });
        }
        Ok(())
    }

    /// Executes the decided function, honoring the safeguard.
    ///
    /// `confirmation` is the user's verdict for sensitive actions; a denied
    /// action is reported as not executed and leaves the backend untouched.
    pub fn dispatch(
        &self,
        backend: &mut dyn DesktopBackend,
        app_id: &str,
        decision: &ActAgentDecision,
        control: &ControlInfo,
        confirmation: Option<bool>,
    ) -> Result<DispatchOutcome, EngineError> {
        self.check(decision, control)?;
        let verdict = classify_sensitivity(decision, control);
        if verdict.sensitive && confirmation.is_none() {
            return Err(EngineError::ConfirmationRequired(verdict.reason));
        }
        let confirmed = if verdict.sensitive { confirmation } else { None };
        if confirmed == Some(false) {
            return Ok(DispatchOutcome { result: ExecutionResult::denied(), verdict, executed: false, confirmed });
        }
        let result = match decision.function.name.as_str() {
            "Annotate" => {
                let shot = backend.capture_window(app_id)?;
                annotate(&shot, std::slice::from_ref(control), &self.palette)
                    .map_err(|e| BackendError::Unavailable(e.to_string()))?;
                ExecutionResult::unchanged(format!("annotated {}", control.title))
            }
            "Summary" => ExecutionResult::unchanged(backend.describe(app_id, Some(&control.control_id))?),
            _ => backend.execute(app_id, &control.control_id, &decision.function)?,
        };
        Ok(DispatchOutcome { result, verdict, executed: true, confirmed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ControlKind, FunctionCall, Rect};

    fn decision(function: &str, status: AgentStatus) -> ActAgentDecision {
        ActAgentDecision {
            observation: String::new(),
            thoughts: String::new(),
            selected_control_label: "1".into(),
            selected_control_name: String::new(),
            function: FunctionCall::new(function),
            status,
            local_plan: vec![],
            comment: String::new(),
        }
    }

    fn control(ty: ControlType, title: &str) -> ControlInfo {
        ControlInfo {
            control_id: "c".into(),
            kind: ControlKind::Known(ty),
            title: title.into(),
            bbox: Rect::new(0, 0, 4, 4),
            enabled: true,
            text: String::new(),
        }
    }

    #[test]
    fn send_button_is_sensitive() {
        let v = classify_sensitivity(&decision("Click", AgentStatus::Continue), &control(ControlType::Button, "Send"));
        assert!(v.sensitive);
        assert_eq!(v.category, Some(SensitiveCategory::SendMessage));
    }

    #[test]
    fn get_text_on_document_is_safe() {
        let v = classify_sensitivity(&decision("GetText", AgentStatus::Continue), &control(ControlType::Document, "Body"));
        assert_eq!(v, SensitivityVerdict::safe());
    }

    #[test]
    fn pending_is_agent_declared() {
        let v = classify_sensitivity(&decision("Click", AgentStatus::Pending), &control(ControlType::Button, "Apply"));
        assert!(v.sensitive);
        assert_eq!(v.category, None);
        assert_eq!(v.reason, "agent-declared");
    }

    #[test]
    fn table_categories() {
        let cases = [
            ("Click", ControlType::MenuItem, "Delete file", SensitiveCategory::DeleteModifyFiles),
            ("Click", ControlType::Button, "Remove", SensitiveCategory::DeleteModifyFiles),
            ("Click", ControlType::Button, "Close", SensitiveCategory::CloseWindowApp),
            ("Click", ControlType::Button, "Turn on camera", SensitiveCategory::CameraMic),
            ("Click", ControlType::Hyperlink, "Microphone access", SensitiveCategory::CameraMic),
            ("Click", ControlType::Button, "Install", SensitiveCategory::InstallUninstall),
            ("Click", ControlType::MenuItem, "Uninstall app", SensitiveCategory::InstallUninstall),
            ("GetText", ControlType::ListItem, "Saved passwords", SensitiveCategory::PrivateData),
            ("Click", ControlType::TabItem, "Browsing history", SensitiveCategory::PrivateData),
        ];
        for (f, ty, title, cat) in cases {
            let v = classify_sensitivity(&decision(f, AgentStatus::Continue), &control(ty, title));
            assert_eq!(v.category, Some(cat), "{f} {ty} {title}");
        }
        // whole words only
        let v = classify_sensitivity(&decision("Click", AgentStatus::Continue), &control(ControlType::ListItem, "Sender"));
        assert!(!v.sensitive);
        let v = classify_sensitivity(&decision("Click", AgentStatus::Continue), &control(ControlType::Button, "Closed tickets"));
        assert!(!v.sensitive);
    }

    #[test]
    fn registry_rules() {
        let mut reg = ActionRegistry::new();
        let spec = ActionSpec {
            name: "SaveAsPdf".into(),
            purpose: "Export the document as PDF.".into(),
            args: [("path".to_string(), ArgSpec { type_tag: "string".into(), required: true })].into(),
            returns: "the written path".into(),
            compatible_types: [ControlType::Document].into(),
            demonstration: Some("SaveAsPdf(path=\"a.pdf\")".into()),
            builtin: false,
        };
        reg.register(spec.clone()).unwrap();
        assert!(reg.specs().iter().any(|s| s.prompt_line().starts_with("- SaveAsPdf(path: string)")));
        assert_eq!(reg.register(spec), Err(EngineError::DuplicateName("SaveAsPdf".into())));
        let mut click = reg.get("Click").unwrap().clone();
        click.builtin = false;
        assert_eq!(reg.register(click), Err(EngineError::ReservedName("Click".into())));
        assert_eq!(reg.specs().len(), 7);
    }

    #[test]
    fn check_errors() {
        let eng = ActionEngine::default();
        let set_on_button = decision("SetText", AgentStatus::Continue);
        assert_eq!(eng.check(&set_on_button, &control(ControlType::Button, "OK")).unwrap_err().code(), "FUNCTION_TYPE_MISMATCH");
        assert_eq!(eng.check(&set_on_button, &control(ControlType::Edit, "To")).unwrap_err().code(), "MISSING_ARGUMENT");
        assert_eq!(
            eng.check(&decision("Fly", AgentStatus::Continue), &control(ControlType::Button, "OK")).unwrap_err().code(),
            "UNREGISTERED_FUNCTION"
        );
        let raw = ControlInfo { kind: ControlKind::Raw("Pane".into()), ..control(ControlType::Button, "p") };
        assert_eq!(eng.check(&decision("Click", AgentStatus::Continue), &raw).unwrap_err().code(), "FUNCTION_TYPE_MISMATCH");
    }
}
