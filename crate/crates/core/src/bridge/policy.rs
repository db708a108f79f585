//! Rule-table stand-in for the vision-language model.
//!
//! A [`PolicyTable`] is an ordered list of rules; the first rule whose
//! matcher accepts the prompt's structured observation is rendered into a
//! schema-valid response. Templates name controls by title, and the policy
//! resolves titles to the labels of the current listing.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::prompt::Prompt;
use super::wire::{render_actagent_response, render_appagent_response, ActAgentDecision, AppAgentDecision};
use super::{BridgeError, ModelAdapter};
use crate::backend::FunctionCall;
use crate::session::{AgentKind, AgentStatus, MemoryEntry};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyTable {
    pub rules: Vec<PolicyRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRule {
    #[serde(default)]
    pub name: String,
    pub agent: AgentKind,
    #[serde(default)]
    pub when: Matcher,
    pub respond: ResponseTemplate,
}

/// All listed conditions must hold. Text matches are case-insensitive.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Matcher {
    pub request_contains: Vec<String>,
    pub request_lacks: Vec<String>,
    /// Titles that must appear in the listing.
    pub visible: Vec<String>,
    pub hidden: Vec<String>,
    /// Substrings of some memory entry (action or result) from the current request.
    pub memory_contains: Vec<String>,
    pub memory_lacks: Vec<String>,
    /// Like `memory_contains`, over every memory entry shown in the prompt.
    pub history_contains: Vec<String>,
    pub history_lacks: Vec<String>,
    /// Restricts the rule to these (1-based) trial indices; empty means every trial.
    pub trials: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseTemplate {
    pub status: AgentStatus,
    /// Title of the application or control to select.
    #[serde(default)]
    pub select: Option<String>,
    #[serde(default)]
    pub function: String,
    /// Values may use `{{result:PATTERN}}` (latest result whose action
    /// contains PATTERN) and `{{label:TITLE}}`.
    #[serde(default)]
    pub args: BTreeMap<String, String>,
    /// Titles to re-annotate, for SCREENSHOT responses.
    #[serde(default)]
    pub refine: Vec<String>,
    #[serde(default)]
    pub observation: Option<String>,
    #[serde(default)]
    pub thoughts: Option<String>,
    #[serde(default)]
    pub plan: Vec<String>,
    #[serde(default)]
    pub comment: Option<String>,
}

impl PolicyTable {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let table: PolicyTable = serde_json::from_str(text).map_err(|e| e.to_string())?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Checks every template can only render schema-valid responses.
    pub fn validate(&self) -> Result<(), String> {
        for (i, r) in self.rules.iter().enumerate() {
            let t = &r.respond;
            let id = if r.name.is_empty() { format!("rule {i}") } else { r.name.clone() };
            match (r.agent, t.status) {
                (AgentKind::App, s) if !s.allowed_for_app_agent() => {
                    return Err(format!("{id}: status {s} not allowed for the app agent"))
                }
                (AgentKind::App, AgentStatus::Continue) if t.select.is_none() => {
                    return Err(format!("{id}: CONTINUE needs `select`"))
                }
                (AgentKind::Act, AgentStatus::Continue | AgentStatus::Pending)
                    if t.select.is_none() || t.function.trim().is_empty() =>
                {
                    return Err(format!("{id}: {} needs `select` and `function`", t.status))
                }
                (AgentKind::Act, AgentStatus::Screenshot) if t.refine.is_empty() => {
                    return Err(format!("{id}: SCREENSHOT needs `refine`"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn contains_ci(hay: &str, needle: &str) -> bool {
    hay.to_lowercase().contains(&needle.to_lowercase())
}

fn entry_text(e: &MemoryEntry) -> String {
    format!("{}\n{}", e.action_summary, e.execution_result)
}

struct View<'a> {
    prompt: &'a Prompt,
}

impl View<'_> {
    fn label_of(&self, title: &str) -> Option<&str> {
        self.prompt.observation.listing.iter().find(|i| i.title == title).map(|i| i.label.as_str())
    }

    fn current_memory(&self) -> impl Iterator<Item = &MemoryEntry> {
        let first = self.prompt.observation.request_first_step;
        self.prompt.observation.memory.iter().filter(move |e| e.step_index >= first)
    }

    fn matches(&self, m: &Matcher, trial: u32) -> bool {
        let obs = &self.prompt.observation;
        let in_current = |s: &String| self.current_memory().any(|e| contains_ci(&entry_text(e), s));
        let in_history = |s: &String| obs.memory.iter().any(|e| contains_ci(&entry_text(e), s));
        (m.trials.is_empty() || m.trials.contains(&trial))
            && m.request_contains.iter().all(|s| contains_ci(&obs.request, s))
            && !m.request_lacks.iter().any(|s| contains_ci(&obs.request, s))
            && m.visible.iter().all(|t| self.label_of(t).is_some())
            && !m.hidden.iter().any(|t| self.label_of(t).is_some())
            && m.memory_contains.iter().all(in_current)
            && !m.memory_lacks.iter().any(in_current)
            && m.history_contains.iter().all(in_history)
            && !m.history_lacks.iter().any(in_history)
    }

    /// Expands placeholders; `None` if one cannot be resolved.
    fn expand(&self, template: &str) -> Option<String> {
        let mut out = String::new();
        let mut rest = template;
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let end = rest[start..].find("}}")? + start;
            let inner = &rest[start + 2..end];
            let value = if let Some(pat) = inner.strip_prefix("result:") {
                self.prompt
                    .observation
                    .memory
                    .iter()
                    .rev()
                    .find(|e| contains_ci(&e.action_summary, pat))
                    .map(|e| e.execution_result.clone())?
            } else {
                self.label_of(inner.strip_prefix("label:")?)?.to_string()
            };
            out.push_str(&value);
            rest = &rest[end + 2..];
        }
        out.push_str(rest);
        Some(out)
    }

    fn render(&self, rule: &PolicyRule) -> Option<String> {
        let t = &rule.respond;
        let (label, name) = match &t.select {
            Some(title) => (self.label_of(title)?.to_string(), title.clone()),
            None => (String::new(), String::new()),
        };
        let observation = t.observation.clone().unwrap_or_else(|| {
            format!("{} items are listed.", self.prompt.observation.listing.len())
        });
        let thoughts = t.thoughts.clone().unwrap_or_else(|| format!("Following rule {}.", rule.name));
        let comment = match &t.comment {
            Some(c) => self.expand(c)?,
            None => String::new(),
        };
        match rule.agent {
            AgentKind::App => Some(render_appagent_response(&AppAgentDecision {
                observation,
                thoughts,
                selected_app_label: label,
                selected_app_name: name,
                status: t.status,
                global_plan: t.plan.clone(),
                comment,
            })),
            AgentKind::Act => {
                let mut args = BTreeMap::new();
                for (k, v) in &t.args {
                    args.insert(k.clone(), self.expand(v)?);
                }
                if t.status == AgentStatus::Screenshot {
                    let labels = t.refine.iter().map(|title| self.label_of(title)).collect::<Option<Vec<_>>>()?;
                    args.insert("labels".into(), labels.join(","));
                }
                Some(render_actagent_response(&ActAgentDecision {
                    observation,
                    thoughts,
                    selected_control_label: label,
                    selected_control_name: name,
                    function: FunctionCall { name: t.function.clone(), args },
                    status: t.status,
                    local_plan: t.plan.clone(),
                    comment,
                }))
            }
        }
    }
}

/// First matching rule for the prompt's agent, rendered as response text.
pub fn scripted_policy(prompt: &Prompt, table: &PolicyTable, trial: u32) -> Result<String, BridgeError> {
    let view = View { prompt };
    table
        .rules
        .iter()
        .filter(|r| r.agent == prompt.agent)
        .filter(|r| view.matches(&r.when, trial))
        .find_map(|r| view.render(r))
        .ok_or_else(|| {
            BridgeError::NoRuleMatched(format!(
                "{} agent, request {:?}, {} listed items",
                prompt.agent.as_str(),
                prompt.observation.request,
                prompt.observation.listing.len()
            ))
        })
}

/// [`ModelAdapter`] backed by a [`PolicyTable`].
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    table: PolicyTable,
    trial: u32,
}

impl ScriptedPolicy {
    pub fn new(table: PolicyTable) -> Self {
        ScriptedPolicy { table, trial: 1 }
    }

    pub fn with_trial(mut self, trial: u32) -> Self {
        self.trial = trial;
        self
    }
}

impl ModelAdapter for ScriptedPolicy {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, BridgeError> {
        scripted_policy(prompt, &self.table, self.trial)
    }
}
