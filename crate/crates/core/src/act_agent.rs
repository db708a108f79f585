//! Action selection agent: per-step observation, decision and the
//! SCREENSHOT re-annotation handshake.

use crate::annotate::{annotate, highlight_previous, LabelMap, Palette};
use crate::app_agent::{ask, AgentError, AgentSettings};
use crate::backend::{ControlInfo, DesktopBackend, Image};
use crate::bridge::{
    assemble_actagent_prompt, parse_actagent_response, ActAgentDecision, ImageRole, ListingItem, ModelAdapter,
};
use crate::engine::ActionSpec;
use crate::filter::{hard_filter, soft_refilter, FilterConfig};
use crate::session::{AgentStatus, MemoryEntry, PlanKind, Session, UserRequest};

/// What the action agent sees at one step.
#[derive(Debug, Clone)]
pub struct StepContext {
    pub app_id: String,
    pub previous_image: Image,
    pub clean_image: Image,
    pub annotated_image: Image,
    pub label_map: LabelMap,
    /// Controls after hard filtering (or the soft subset after a redo), aligned with `label_map`.
    pub controls: Vec<ControlInfo>,
    /// Number of controls the backend reported before filtering.
    pub raw_count: usize,
    pub redo_count: u32,
}

impl StepContext {
    pub fn control_for_label(&self, label: &str) -> Option<&ControlInfo> {
        self.label_map.index_of(label).map(|i| &self.controls[i])
    }
}

/// The previous step's clean screenshot and the control operated on it.
#[derive(Debug, Clone)]
pub struct PreviousStep {
    pub clean_image: Image,
    pub control: Option<ControlInfo>,
}

/// Captures and annotates the focused application for step `step_index`.
///
/// With no previous step in this phase the previous image is the clean one.
pub fn observe(
    backend: &dyn DesktopBackend,
    app_id: &str,
    step_index: u64,
    previous: Option<&PreviousStep>,
    filter: &FilterConfig,
    palette: &Palette,
) -> Result<StepContext, AgentError> {
    let raw = backend.enumerate_controls(app_id)?;
    let controls = hard_filter(&raw, filter);
    let clean = backend.capture_window(app_id)?;
    let (annotated, mut label_map) = annotate(&clean, &controls, palette)?;
    label_map.step_index = step_index;
    let previous_image = match previous {
        Some(PreviousStep { clean_image, control: Some(c) }) => highlight_previous(clean_image, c)?,
        Some(PreviousStep { clean_image, control: None }) => clean_image.clone(),
        None => clean.clone(),
    };
    Ok(StepContext {
        app_id: app_id.to_string(),
        previous_image,
        clean_image: clean,
        annotated_image: annotated,
        label_map,
        controls,
        raw_count: raw.len(),
        redo_count: 0,
    })
}

#[derive(Debug, Clone)]
pub struct ActSelection {
    pub decision: ActAgentDecision,
    /// Control bound to the decision's label in the context it was parsed against.
    pub control: Option<ControlInfo>,
    pub prompts: u32,
}

fn needs_control(status: AgentStatus) -> bool {
    matches!(status, AgentStatus::Continue | AgentStatus::Pending)
}

/// Asks the model for one action and binds its label to a control.
///
/// A label missing from the map gets one corrective re-prompt. CONTINUE and
/// PENDING decisions record a local plan.
#[allow(clippy::too_many_arguments)]
pub fn select_action(
    ctx: &StepContext,
    session: &mut Session,
    request: &UserRequest,
    adapter: &mut dyn ModelAdapter,
    settings: &AgentSettings,
    functions: &[ActionSpec],
    filter: &FilterConfig,
) -> Result<ActSelection, AgentError> {
    let listing = ListingItem::for_controls(&ctx.controls, &ctx.label_map);
    let images = vec![
        (ImageRole::Previous, ctx.previous_image.clone()),
        (ImageRole::Clean, ctx.clean_image.clone()),
        (ImageRole::Annotated, ctx.annotated_image.clone()),
    ];
    let mut prompt = assemble_actagent_prompt(
        request,
        session,
        &listing,
        &ctx.label_map,
        images,
        &settings.act_examples,
        functions,
        filter,
        settings.memory_window,
    )
    .map_err(AgentError::ModelFailure)?;
    let mut prompts = 0;
    let mut decision = ask(adapter, &mut prompt, parse_actagent_response, settings.parse_retries, &mut prompts)?;

    let mut control = None;
    if needs_control(decision.status) {
        control = ctx.control_for_label(&decision.selected_control_label).cloned();
        if control.is_none() {
            prompt.retry_notes.push(format!(
                "Label {:?} is not among the annotated controls; choose one of 1..{}.",
                decision.selected_control_label,
                ctx.label_map.len()
            ));
            decision = ask(adapter, &mut prompt, parse_actagent_response, settings.parse_retries, &mut prompts)?;
            if needs_control(decision.status) {
                control = Some(
                    ctx.control_for_label(&decision.selected_control_label)
                        .cloned()
                        .ok_or_else(|| AgentError::UnknownControlLabel(decision.selected_control_label.clone()))?,
                );
            }
        }
        if control.is_some() {
            session.push_plan(PlanKind::Local, decision.local_plan.clone())?;
        }
    }
    Ok(ActSelection { decision, control, prompts })
}

/// Rebuilds the step context with only the controls the agent asked for,
/// relabeled from "1". At most `max_redos` redos are allowed per step.
pub fn handle_screenshot_redo(
    ctx: &StepContext,
    decision: &ActAgentDecision,
    palette: &Palette,
    max_redos: u32,
) -> Result<StepContext, AgentError> {
    if ctx.redo_count >= max_redos {
        return Err(AgentError::RedoExhausted);
    }
    let subset = soft_refilter(&ctx.controls, &decision.requested_labels(), &ctx.label_map)?;
    let (annotated, mut label_map) = annotate(&ctx.clean_image, &subset, palette)?;
    label_map.step_index = ctx.label_map.step_index;
    Ok(StepContext {
        app_id: ctx.app_id.clone(),
        previous_image: ctx.previous_image.clone(),
        clean_image: ctx.clean_image.clone(),
        annotated_image: annotated,
        label_map,
        controls: subset,
        raw_count: ctx.raw_count,
        redo_count: ctx.redo_count + 1,
    })
}

/// `Function: title` for dispatched steps, the status otherwise.
pub fn action_summary(decision: &ActAgentDecision, control: Option<&ControlInfo>) -> String {
    match control {
        Some(c) if needs_control(decision.status) => format!("{}: {}", decision.function.name, c.title),
        _ => decision.status.as_str().to_string(),
    }
}

/// Appends the memory entry for a finished action step.
pub fn record_step(
    session: &mut Session,
    decision: &ActAgentDecision,
    control: Option<&ControlInfo>,
    execution_result: &str,
) -> Result<(), AgentError> {
    session.append_memory(MemoryEntry {
        step_index: session.step_count(),
        phase_index: session.current_phase(),
        thoughts: decision.thoughts.clone(),
        action_summary: action_summary(decision, control),
        execution_result: execution_result.to_string(),
        comment: decision.comment.clone(),
    })?;
    Ok(())
}
