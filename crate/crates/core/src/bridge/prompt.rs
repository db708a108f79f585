use std::fmt::Write as _;

use serde::Serialize;

use super::BridgeError;
use crate::annotate::LabelMap;
use crate::backend::{AppInfo, ControlInfo, Image};
use crate::engine::ActionSpec;
use crate::filter::FilterConfig;
use crate::session::{AgentKind, AgentStatus, MemoryEntry, Session, UserRequest};

pub const APP_OUTPUT_FIELDS: [&str; 6] = ["Observation", "Thoughts", "SelectedApp", "Status", "Plan", "Comment"];
pub const ACT_OUTPUT_FIELDS: [&str; 7] =
    ["Observation", "Thoughts", "SelectedControl", "Function", "Status", "Plan", "Comment"];

const APP_SYSTEM: &str = "You are the application selection agent of a desktop automation assistant. \
Pick the running application that should handle the next part of the user request and draft a coarse plan \
for the whole request.";
const ACT_SYSTEM: &str = "You are the action selection agent of a desktop automation assistant. \
Choose one labeled control in the focused application and one function to apply to it, then revise the \
fine-grained plan for the remaining work.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageRole {
    Desktop,
    Previous,
    Clean,
    Annotated,
}

impl ImageRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ImageRole::Desktop => "desktop",
            ImageRole::Previous => "previous",
            ImageRole::Clean => "clean",
            ImageRole::Annotated => "annotated",
        }
    }
}

/// One labeled entry of a prompt's listing: an application for the
/// selection agent, a control for the action agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ListingItem {
    pub label: String,
    pub id: String,
    pub kind: String,
    pub title: String,
}

impl ListingItem {
    pub fn for_controls(controls: &[ControlInfo], map: &LabelMap) -> Vec<ListingItem> {
        map.entries
            .iter()
            .zip(controls)
            .map(|((label, _), c)| ListingItem {
                label: label.clone(),
                id: c.control_id.clone(),
                kind: c.kind.name().to_string(),
                title: c.title.clone(),
            })
            .collect()
    }
}

/// Structured copy of what the prompt text says, for adapters that do not
/// read pixels or prose.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptObservation {
    pub request: String,
    pub listing: Vec<ListingItem>,
    /// The memory entries shown in the prompt.
    pub memory: Vec<MemoryEntry>,
    /// First step index belonging to the current request.
    pub request_first_step: u64,
}

#[derive(Debug, Clone)]
pub struct Prompt {
    pub agent: AgentKind,
    pub system_text: String,
    pub example_blocks: Vec<String>,
    pub context_text: String,
    images: Vec<(ImageRole, Image)>,
    pub observation: PromptObservation,
    /// Parser or grounding errors from earlier attempts in this step.
    pub retry_notes: Vec<String>,
}

impl Prompt {
    pub fn images(&self) -> &[(ImageRole, Image)] {
        &self.images
    }

    /// Replaces the images; roles must be `[desktop]` for the selection
    /// agent and `[previous, clean, annotated]` for the action agent.
    pub fn set_images(&mut self, images: Vec<(ImageRole, Image)>) -> Result<(), BridgeError> {
        let expected: &[ImageRole] = match self.agent {
            AgentKind::App => &[ImageRole::Desktop],
            AgentKind::Act => &[ImageRole::Previous, ImageRole::Clean, ImageRole::Annotated],
        };
        let got: Vec<ImageRole> = images.iter().map(|(r, _)| *r).collect();
        if got != expected {
            let names = |rs: &[ImageRole]| rs.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(", ");
            return Err(BridgeError::ImageOrder { expected: names(expected), got: names(&got) });
        }
        self.images = images;
        Ok(())
    }

    /// Full text sent to a model, with images referenced by role.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.system_text);
        out.push_str("\n\n");
        for (i, ex) in self.example_blocks.iter().enumerate() {
            let _ = write!(out, "Example {}:\n{}\n\n", i + 1, ex.trim_end());
        }
        for (role, img) in &self.images {
            let _ = writeln!(out, "[image:{} {}x{}]", role.as_str(), img.width(), img.height());
        }
        out.push('\n');
        out.push_str(&self.context_text);
        for note in &self.retry_notes {
            let _ = write!(out, "\n{note}");
        }
        out
    }
}

/// Original demonstration blocks shipped with the crate, two per agent.
pub fn default_examples(agent: AgentKind) -> Vec<String> {
    match agent {
        AgentKind::App => vec![
            include_str!("../../assets/examples/app_1.txt").to_string(),
            include_str!("../../assets/examples/app_2.txt").to_string(),
        ],
        AgentKind::Act => vec![
            include_str!("../../assets/examples/act_1.txt").to_string(),
            include_str!("../../assets/examples/act_2.txt").to_string(),
        ],
    }
}

fn memory_window(session: &Session, window: usize) -> Vec<MemoryEntry> {
    let mem = session.memory();
    mem[mem.len().saturating_sub(window.max(1))..].to_vec()
}

pub fn assemble_appagent_prompt(
    request: &UserRequest,
    session: &Session,
    apps: &[AppInfo],
    desktop: Image,
    examples: &[String],
    window: usize,
) -> Prompt {
    let listing: Vec<ListingItem> = apps
        .iter()
        .enumerate()
        .map(|(i, a)| ListingItem { label: (i + 1).to_string(), id: a.app_id.clone(), kind: a.kind.clone(), title: a.name.clone() })
        .collect();

    let mut ctx = String::new();
    let _ = write!(ctx, "User request:\n{}\n\nAvailable applications:\n", request.text);
    for item in &listing {
        let _ = writeln!(ctx, "{}. {} ({})", item.label, item.title, item.kind);
    }
    let _ = write!(ctx, "\nMemory:\n{}\n", session.memory_digest(window));
    ctx.push_str("Respond with a single JSON object with exactly these keys:\n");
    ctx.push_str("- Observation: what the desktop screenshot shows\n");
    ctx.push_str("- Thoughts: the logical next step, reasoned step by step\n");
    ctx.push_str("- SelectedApp: {\"label\", \"name\"} of the chosen application\n");
    ctx.push_str("- Status: \"CONTINUE\" or \"FINISH\"\n");
    ctx.push_str("- Plan: global plan for the rest of the request, as a list of strings\n");
    ctx.push_str("- Comment: progress summary or points for the user\n");

    Prompt {
        agent: AgentKind::App,
        system_text: APP_SYSTEM.to_string(),
        example_blocks: examples.to_vec(),
        context_text: ctx,
        images: vec![(ImageRole::Desktop, desktop)],
        observation: PromptObservation {
            request: request.text.clone(),
            listing,
            memory: memory_window(session, window),
            request_first_step: session.request_start_step(),
        },
        retry_notes: Vec::new(),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn assemble_actagent_prompt(
    request: &UserRequest,
    session: &Session,
    listing: &[ListingItem],
    label_map: &LabelMap,
    images: Vec<(ImageRole, Image)>,
    examples: &[String],
    functions: &[ActionSpec],
    filter: &FilterConfig,
    window: usize,
) -> Result<Prompt, BridgeError> {
    if listing.len() != label_map.len() {
        return Err(BridgeError::LabelMismatch(format!(
            "{} listing lines for {} labels",
            listing.len(),
            label_map.len()
        )));
    }
    for (item, (label, id)) in listing.iter().zip(&label_map.entries) {
        if &item.label != label || &item.id != id {
            return Err(BridgeError::LabelMismatch(format!("listing label {} does not match map entry {label}", item.label)));
        }
    }

    let mut ctx = String::new();
    let _ = write!(ctx, "User request:\n{}\n\nControls:\n", request.text);
    for item in listing {
        let _ = writeln!(ctx, "{}. {}: {}", item.label, item.kind, item.title);
    }
    if listing.len() > filter.soft_trigger_threshold {
        let _ = writeln!(
            ctx,
            "\nThere are {} controls. If the annotation is too cluttered, answer with Status \"SCREENSHOT\" and \
             Args.labels set to a comma-separated list of the labels you want re-annotated.",
            listing.len()
        );
    }
    let _ = write!(ctx, "\nMemory:\n{}\n", session.memory_digest(window));
    ctx.push_str("Available functions:\n");
    for f in functions {
        ctx.push_str(&f.prompt_line());
        ctx.push('\n');
    }
    ctx.push_str("\nRespond with a single JSON object with exactly these keys:\n");
    ctx.push_str("- Observation: what the screenshots show and whether the last action took effect\n");
    ctx.push_str("- Thoughts: the rationale for this action\n");
    ctx.push_str("- SelectedControl: {\"label\", \"name\"} of the chosen control\n");
    ctx.push_str("- Function: the function name, with its arguments under Args (string to string)\n");
    let statuses: Vec<&str> = AgentStatus::ALL.iter().map(|s| s.as_str()).collect();
    let _ = writeln!(ctx, "- Status: one of {}", statuses.join(", "));
    ctx.push_str("- Plan: revised fine-grained plan for the remaining steps, as a list of strings\n");
    ctx.push_str("- Comment: progress summary, highlights or plan changes\n");

    let mut prompt = Prompt {
        agent: AgentKind::Act,
        system_text: ACT_SYSTEM.to_string(),
        example_blocks: examples.to_vec(),
        context_text: ctx,
        images: Vec::new(),
        observation: PromptObservation {
            request: request.text.clone(),
            listing: listing.to_vec(),
            memory: memory_window(session, window),
            request_first_step: session.request_start_step(),
        },
        retry_notes: Vec::new(),
    };
    prompt.set_images(images)?;
    Ok(prompt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ControlKind, ControlType, Rect};
    use crate::engine::ActionRegistry;

    fn apps() -> Vec<AppInfo> {
        ["Mail", "Editor", "Viewer"]
            .iter()
            .map(|n| AppInfo { app_id: n.to_lowercase(), name: n.to_string(), kind: "app".into(), focused: false })
            .collect()
    }

    fn img() -> Image {
        Image::filled(4, 4, [0, 0, 0])
    }

    #[test]
    fn app_prompt_lists_apps_in_order() {
        let mut s = Session::new("t");
        let r = s.make_request("send an email").unwrap();
        let p = assemble_appagent_prompt(&r, &s, &apps(), img(), &[], 10);
        let a = p.context_text.find("1. Mail (app)").unwrap();
        let b = p.context_text.find("2. Editor (app)").unwrap();
        let c = p.context_text.find("3. Viewer (app)").unwrap();
        assert!(a < b && b < c);
        assert!(p.context_text.contains("Memory:\n\n"));
        for f in APP_OUTPUT_FIELDS {
            assert!(p.context_text.contains(f));
        }
        assert_eq!(p.images().len(), 1);
    }

    #[test]
    fn app_prompt_is_byte_stable() {
        let mut s = Session::new("t");
        let r = s.make_request("send an email").unwrap();
        let ex = default_examples(AgentKind::App);
        let a = assemble_appagent_prompt(&r, &s, &apps(), img(), &ex, 10).render_text();
        let b = assemble_appagent_prompt(&r, &s, &apps(), img(), &ex, 10).render_text();
        assert_eq!(a, b);
    }

    fn controls(n: usize) -> Vec<ControlInfo> {
        (0..n)
            .map(|i| ControlInfo {
                control_id: format!("c{i}"),
                kind: ControlKind::Known(ControlType::Button),
                title: format!("B{i}"),
                bbox: Rect::new(0, 0, 2, 2),
                enabled: true,
                text: String::new(),
            })
            .collect()
    }

    fn three_images() -> Vec<(ImageRole, Image)> {
        vec![(ImageRole::Previous, img()), (ImageRole::Clean, img()), (ImageRole::Annotated, img())]
    }

    #[test]
    fn act_prompt_listing_lines() {
        let mut s = Session::new("t");
        let r = s.make_request("x").unwrap();
        let cs = controls(7);
        let map = LabelMap::for_controls(&cs, 0);
        let listing = ListingItem::for_controls(&cs, &map);
        let reg = ActionRegistry::new();
        let p = assemble_actagent_prompt(&r, &s, &listing, &map, three_images(), &[], reg.specs(), &FilterConfig::default(), 10)
            .unwrap();
        let lines = p.context_text.lines().filter(|l| l.contains(". Button: B")).count();
        assert_eq!(lines, 7);
        for f in ACT_OUTPUT_FIELDS {
            assert!(p.context_text.contains(f));
        }
        for st in AgentStatus::ALL {
            assert!(p.context_text.contains(st.as_str()));
        }
    }

    #[test]
    fn act_prompt_label_mismatch() {
        let mut s = Session::new("t");
        let r = s.make_request("x").unwrap();
        let cs = controls(7);
        let map = LabelMap::for_controls(&cs, 0);
        let mut listing = ListingItem::for_controls(&cs, &map);
        listing.push(ListingItem { label: "8".into(), id: "c8".into(), kind: "Button".into(), title: "B8".into() });
        let reg = ActionRegistry::new();
        let err = assemble_actagent_prompt(&r, &s, &listing, &map, three_images(), &[], reg.specs(), &FilterConfig::default(), 10)
            .unwrap_err();
        assert_eq!(err.code(), "LABEL_MISMATCH");
    }

    #[test]
    fn act_prompt_rejects_reordered_images() {
        let mut s = Session::new("t");
        let r = s.make_request("x").unwrap();
        let cs = controls(1);
        let map = LabelMap::for_controls(&cs, 0);
        let listing = ListingItem::for_controls(&cs, &map);
        let mut imgs = three_images();
        imgs.swap(0, 2);
        let reg = ActionRegistry::new();
        let err = assemble_actagent_prompt(&r, &s, &listing, &map, imgs, &[], reg.specs(), &FilterConfig::default(), 10)
            .unwrap_err();
        assert!(matches!(err, BridgeError::ImageOrder { .. }));
    }
}
