//! Strict JSON wire format for agent responses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::BridgeError;
use crate::backend::FunctionCall;
use crate::session::AgentStatus;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppAgentDecision {
    pub observation: String,
    pub thoughts: String,
    pub selected_app_label: String,
    pub selected_app_name: String,
    pub status: AgentStatus,
    pub global_plan: Vec<String>,
    pub comment: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActAgentDecision {
    pub observation: String,
    pub thoughts: String,
    pub selected_control_label: String,
    pub selected_control_name: String,
    pub function: FunctionCall,
    pub status: AgentStatus,
    pub local_plan: Vec<String>,
    pub comment: String,
}

impl ActAgentDecision {
    /// The refined label list carried by a SCREENSHOT decision.
    pub fn requested_labels(&self) -> Vec<String> {
        split_labels(self.function.arg("labels").unwrap_or_default())
    }
}

fn split_labels(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Selection {
    label: String,
    name: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AppWire {
    #[serde(rename = "Observation")]
    observation: String,
    #[serde(rename = "Thoughts")]
    thoughts: String,
    #[serde(rename = "SelectedApp")]
    selected_app: Selection,
    #[serde(rename = "Status")]
    status: String,
    #[serde(rename = "Plan")]
    plan: Vec<String>,
    #[serde(rename = "Comment")]
    comment: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActWire {
    #[serde(rename = "Observation")]
    observation: String,
    #[serde(rename = "Thoughts")]
    thoughts: String,
    #[serde(rename = "SelectedControl")]
    selected_control: Selection,
    #[serde(rename = "Function")]
    function: String,
    #[serde(rename = "Args")]
    args: BTreeMap<String, String>,
    #[serde(rename = "Status")]
    status: String,
    #[serde(rename = "Plan")]
    plan: Vec<String>,
    #[serde(rename = "Comment")]
    comment: String,
}

fn fragment(text: &str) -> String {
    text.chars().take(200).collect()
}

fn schema(detail: impl Into<String>, fragment: impl Into<String>) -> BridgeError {
    BridgeError::SchemaViolation { detail: detail.into(), fragment: fragment.into() }
}

/// Syntax check, then typed decoding with no unknown or missing keys.
fn decode<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, BridgeError> {
    let value: Value = serde_json::from_str(text.trim()).map_err(|e| BridgeError::MalformedResponse {
        detail: e.to_string(),
        fragment: fragment(text),
    })?;
    if !value.is_object() {
        return Err(schema("response must be a single JSON object", fragment(text)));
    }
    let shown = fragment(&value.to_string());
    serde_json::from_value(value).map_err(|e| schema(e.to_string(), shown))
}

fn status(s: &str) -> Result<AgentStatus, BridgeError> {
    AgentStatus::parse(s).ok_or_else(|| schema(format!("unknown status {s:?}"), s))
}

pub fn parse_appagent_response(text: &str) -> Result<AppAgentDecision, BridgeError> {
    let w: AppWire = decode(text)?;
    let status = status(&w.status)?;
    if !status.allowed_for_app_agent() {
        return Err(schema(format!("status {status} is not allowed for application selection"), w.status));
    }
    if status == AgentStatus::Continue && w.selected_app.label.trim().is_empty() {
        return Err(schema("CONTINUE requires SelectedApp.label", ""));
    }
    Ok(AppAgentDecision {
        observation: w.observation,
        thoughts: w.thoughts,
        selected_app_label: w.selected_app.label,
        selected_app_name: w.selected_app.name,
        status,
        global_plan: w.plan,
        comment: w.comment,
    })
}

pub fn parse_actagent_response(text: &str) -> Result<ActAgentDecision, BridgeError> {
    let w: ActWire = decode(text)?;
    let status = status(&w.status)?;
    match status {
        AgentStatus::Continue | AgentStatus::Pending => {
            if w.function.trim().is_empty() {
                return Err(schema(format!("{status} requires Function"), ""));
            }
            if w.selected_control.label.trim().is_empty() {
                return Err(schema(format!("{status} requires SelectedControl.label"), ""));
            }
        }
        AgentStatus::Screenshot => {
            if split_labels(w.args.get("labels").map(String::as_str).unwrap_or_default()).is_empty() {
                return Err(schema("SCREENSHOT requires Args.labels", fragment(&format!("{:?}", w.args))));
            }
        }
        AgentStatus::Finish | AgentStatus::AppSelection => {}
    }
    Ok(ActAgentDecision {
        observation: w.observation,
        thoughts: w.thoughts,
        selected_control_label: w.selected_control.label,
        selected_control_name: w.selected_control.name,
        function: FunctionCall { name: w.function, args: w.args },
        status,
        local_plan: w.plan,
        comment: w.comment,
    })
}

pub fn render_appagent_response(d: &AppAgentDecision) -> String {
    let w = AppWire {
        observation: d.observation.clone(),
        thoughts: d.thoughts.clone(),
        selected_app: Selection { label: d.selected_app_label.clone(), name: d.selected_app_name.clone() },
        status: d.status.as_str().to_string(),
        plan: d.global_plan.clone(),
        comment: d.comment.clone(),
    };
    serde_json::to_string_pretty(&w).expect("wire struct serializes")
}

pub fn render_actagent_response(d: &ActAgentDecision) -> String {
    let w = ActWire {
        observation: d.observation.clone(),
        thoughts: d.thoughts.clone(),
        selected_control: Selection { label: d.selected_control_label.clone(), name: d.selected_control_name.clone() },
        function: d.function.name.clone(),
        args: d.function.args.clone(),
        status: d.status.as_str().to_string(),
        plan: d.local_plan.clone(),
        comment: d.comment.clone(),
    };
    serde_json::to_string_pretty(&w).expect("wire struct serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finish_app() -> &'static str {
        r#"{"Observation":"desktop","Thoughts":"done","SelectedApp":{"label":"","name":""},
            "Status":"FINISH","Plan":[],"Comment":"all done"}"#
    }

    #[test]
    fn finish_response() {
        assert_eq!(parse_appagent_response(finish_app()).unwrap().status, AgentStatus::Finish);
    }

    #[test]
    fn missing_thoughts_is_schema_violation() {
        let text = r#"{"Observation":"x","SelectedApp":{"label":"1","name":"Mail"},"Status":"CONTINUE","Plan":[],"Comment":""}"#;
        assert!(matches!(parse_appagent_response(text), Err(BridgeError::SchemaViolation { .. })));
    }

    #[test]
    fn extra_key_rejected() {
        let text = finish_app().replacen("\"Comment\"", "\"Mood\":\"ok\",\"Comment\"", 1);
        assert!(matches!(parse_appagent_response(&text), Err(BridgeError::SchemaViolation { .. })));
    }

    #[test]
    fn app_agent_cannot_pend() {
        let text = finish_app().replace("FINISH", "PENDING");
        assert!(matches!(parse_appagent_response(&text), Err(BridgeError::SchemaViolation { .. })));
    }

    #[test]
    fn syntax_error_is_malformed() {
        assert!(matches!(parse_appagent_response("{\"Observation\": "), Err(BridgeError::MalformedResponse { .. })));
        assert!(matches!(parse_actagent_response("Sure! Here you go"), Err(BridgeError::MalformedResponse { .. })));
    }

    #[test]
    fn app_selection_status_for_act_agent() {
        let text = r#"{"Observation":"","Thoughts":"switch","SelectedControl":{"label":"","name":""},
            "Function":"","Args":{},"Status":"APP_SELECTION","Plan":["open mail"],"Comment":""}"#;
        let d = parse_actagent_response(text).unwrap();
        assert_eq!(d.status, AgentStatus::AppSelection);
    }

    #[test]
    fn screenshot_needs_labels() {
        let text = r#"{"Observation":"","Thoughts":"","SelectedControl":{"label":"","name":""},
            "Function":"","Args":{},"Status":"SCREENSHOT","Plan":[],"Comment":""}"#;
        assert!(matches!(parse_actagent_response(text), Err(BridgeError::SchemaViolation { .. })));
        let ok = text.replace("\"Args\":{}", "\"Args\":{\"labels\":\"3, 7\"}");
        assert_eq!(parse_actagent_response(&ok).unwrap().requested_labels(), ["3", "7"]);
    }

    #[test]
    fn continue_needs_function() {
        let text = r#"{"Observation":"","Thoughts":"","SelectedControl":{"label":"2","name":"To"},
            "Function":"","Args":{},"Status":"CONTINUE","Plan":[],"Comment":""}"#;
        assert!(matches!(parse_actagent_response(text), Err(BridgeError::SchemaViolation { .. })));
    }
}
