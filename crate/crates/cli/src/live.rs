//! Adapter for a remote vision-language model behind an OpenAI-style
//! chat-completions endpoint.
//!
//! Configured from the environment:
//! `DESKPILOT_MODEL_URL` (full endpoint URL, required), `DESKPILOT_MODEL_KEY`
//! (bearer token, optional), `DESKPILOT_MODEL` (model name, optional) and
//! `DESKPILOT_MODEL_TIMEOUT_SECS` (default 120).

use std::time::Duration;

use base64::Engine as _;
use deskpilot_core::bridge::{BridgeError, ModelAdapter, Prompt};
use serde_json::{json, Value};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveSettings {
    pub url: String,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub timeout: Duration,
}

impl LiveSettings {
    pub fn from_env() -> Option<Self> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        let timeout = var("DESKPILOT_MODEL_TIMEOUT_SECS")
            .and_then(|s| s.parse().ok())
            .map(Duration::from_secs)
            .unwrap_or(DEFAULT_TIMEOUT);
        Some(LiveSettings {
            url: var("DESKPILOT_MODEL_URL")?,
            api_key: var("DESKPILOT_MODEL_KEY"),
            model: var("DESKPILOT_MODEL"),
            timeout,
        })
    }
}

#[derive(Debug, Default)]
pub struct LiveAdapter {
    settings: Option<LiveSettings>,
    client: Option<reqwest::blocking::Client>,
}

impl LiveAdapter {
    /// Reads settings from the environment. An unconfigured adapter refuses
    /// every completion.
    pub fn from_env() -> Self {
        LiveAdapter { settings: LiveSettings::from_env(), client: None }
    }

    pub fn new(settings: LiveSettings) -> Self {
        LiveAdapter { settings: Some(settings), client: None }
    }
}

/// Chat-completions request body: the prompt text followed by its images,
/// in role order, as PNG data URLs.
pub fn request_body(prompt: &Prompt, model: Option<&str>) -> Value {
    let mut content = vec![json!({"type": "text", "text": prompt.render_text()})];
    for (role, image) in prompt.images() {
        let data = base64::engine::general_purpose::STANDARD.encode(image.to_png());
        content.push(json!({"type": "text", "text": format!("[image:{}]", role.as_str())}));
        content.push(json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{data}")}}));
    }
    let mut body = json!({
        "messages": [{"role": "user", "content": content}],
        "temperature": 0,
    });
    if let Some(m) = model {
        body["model"] = json!(m);
    }
    body
}

/// The first choice's message text.
pub fn response_text(body: &Value) -> Option<String> {
    body.pointer("/choices/0/message/content")?.as_str().map(str::to_string)
}

impl ModelAdapter for LiveAdapter {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, BridgeError> {
        let settings = self
            .settings
            .clone()
            .ok_or_else(|| BridgeError::AdapterRefusal("DESKPILOT_MODEL_URL is not set".into()))?;
        if self.client.is_none() {
            let client = reqwest::blocking::Client::builder()
                .timeout(settings.timeout)
                .build()
                .map_err(|e| BridgeError::AdapterRefusal(e.to_string()))?;
            self.client = Some(client);
        }
        let client = self.client.as_ref().expect("client built above");
        let mut request = client.post(&settings.url).json(&request_body(prompt, settings.model.as_deref()));
        if let Some(key) = &settings.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                BridgeError::AdapterTimeout(e.to_string())
            } else {
                BridgeError::AdapterRefusal(e.to_string())
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(BridgeError::AdapterRefusal(format!("model endpoint returned {status}")));
        }
        let body: Value = response.json().map_err(|e| {
            if e.is_timeout() {
                BridgeError::AdapterTimeout(e.to_string())
            } else {
                BridgeError::AdapterRefusal(format!("unreadable model response: {e}"))
            }
        })?;
        response_text(&body).ok_or_else(|| BridgeError::AdapterRefusal("model response has no message content".into()))
    }
}
