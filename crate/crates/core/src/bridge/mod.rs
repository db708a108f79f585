//! Everything between the agents and the vision-language model: prompt
//! assembly, the adapter seam, strict response parsing, and the scripted
//! policy used for deterministic runs.

mod policy;
mod prompt;
mod wire;

pub use policy::{scripted_policy, PolicyRule, PolicyTable, Matcher, ResponseTemplate, ScriptedPolicy};
pub use prompt::{
    assemble_actagent_prompt, assemble_appagent_prompt, default_examples, ImageRole, ListingItem, Prompt,
    PromptObservation, APP_OUTPUT_FIELDS, ACT_OUTPUT_FIELDS,
};
pub use wire::{
    parse_actagent_response, parse_appagent_response, render_actagent_response, render_appagent_response,
    ActAgentDecision, AppAgentDecision,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BridgeError {
    #[error("MALFORMED_RESPONSE: {detail}")]
    MalformedResponse { detail: String, fragment: String },
    #[error("SCHEMA_VIOLATION: {detail}")]
    SchemaViolation { detail: String, fragment: String },
    #[error("ADAPTER_TIMEOUT: {0}")]
    AdapterTimeout(String),
    #[error("ADAPTER_REFUSAL: {0}")]
    AdapterRefusal(String),
    #[error("NO_RULE_MATCHED: {0}")]
    NoRuleMatched(String),
    #[error("LABEL_MISMATCH: {0}")]
    LabelMismatch(String),
    #[error("image roles must be {expected}, got {got}")]
    ImageOrder { expected: String, got: String },
}

impl BridgeError {
    pub fn code(&self) -> &'static str {
        match self {
            BridgeError::MalformedResponse { .. } => "MALFORMED_RESPONSE",
            BridgeError::SchemaViolation { .. } => "SCHEMA_VIOLATION",
            BridgeError::AdapterTimeout(_) => "ADAPTER_TIMEOUT",
            BridgeError::AdapterRefusal(_) => "ADAPTER_REFUSAL",
            BridgeError::NoRuleMatched(_) => "NO_RULE_MATCHED",
            BridgeError::LabelMismatch(_) => "LABEL_MISMATCH",
            BridgeError::ImageOrder { .. } => "IMAGE_ORDER",
        }
    }

    /// Parse failures are retried with the error appended to the prompt.
    pub fn is_parse_error(&self) -> bool {
        matches!(self, BridgeError::MalformedResponse { .. } | BridgeError::SchemaViolation { .. })
    }

    /// Text appended to the prompt when re-asking after a parse failure.
    pub fn retry_note(&self) -> String {
        match self {
            BridgeError::MalformedResponse { detail, fragment } | BridgeError::SchemaViolation { detail, fragment } => {
                format!("Your previous response was rejected ({}: {detail}). Offending fragment: {fragment}", self.code())
            }
            other => other.to_string(),
        }
    }
}

/// Completion seam for a vision-language model or a stand-in policy.
pub trait ModelAdapter: Send {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, BridgeError>;
}

impl<F> ModelAdapter for F
where
    F: FnMut(&Prompt) -> Result<String, BridgeError> + Send,
{
    fn complete(&mut self, prompt: &Prompt) -> Result<String, BridgeError> {
        self(prompt)
    }
}
