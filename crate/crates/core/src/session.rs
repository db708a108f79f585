//! Session state shared by both agents: status vocabulary, memory, plans and
//! the per-step log.

use std::collections::VecDeque;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of memory entries shown verbatim in prompts.
pub const DEFAULT_MEMORY_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgentStatus {
    Continue,
    Finish,
    Pending,
    Screenshot,
    AppSelection,
}

impl AgentStatus {
    pub const ALL: [AgentStatus; 5] = [
        AgentStatus::Continue,
        AgentStatus::Finish,
        AgentStatus::Pending,
        AgentStatus::Screenshot,
        AgentStatus::AppSelection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentStatus::Continue => "CONTINUE",
            AgentStatus::Finish => "FINISH",
            AgentStatus::Pending => "PENDING",
            AgentStatus::Screenshot => "SCREENSHOT",
            AgentStatus::AppSelection => "APP_SELECTION",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.as_str() == s)
    }

    /// Whether the application-selection agent may emit this status.
    pub fn allowed_for_app_agent(self) -> bool {
        matches!(self, AgentStatus::Continue | AgentStatus::Finish)
    }
}

impl fmt::Display for AgentStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    App,
    Act,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::App => "app",
            AgentKind::Act => "act",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("STEP_INDEX_MISMATCH: expected step {expected}, got {got}")]
    StepIndexMismatch { expected: u64, got: u64 },
    #[error("request text is empty")]
    EmptyRequest,
    #[error("plan order violated: {0}")]
    PlanOrder(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRequest {
    pub id: String,
    pub text: String,
    /// Monotonic counter value, not wall-clock time.
    pub submitted_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub step_index: u64,
    pub phase_index: u32,
    pub thoughts: String,
    /// `Function: control title`; `select-app: name` for application steps.
    pub action_summary: String,
    pub execution_result: String,
    pub comment: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PlanKind {
    Global,
    Local,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub kind: PlanKind,
    pub steps: Vec<String>,
    pub created_at_step: u64,
    pub phase: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionState {
    SelectingApp,
    Acting,
    AwaitingConfirmation,
    AwaitingUser,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Session {
    pub id: String,
    pub request_queue: VecDeque<UserRequest>,
    memory: Vec<MemoryEntry>,
    plan_history: Vec<Plan>,
    current_phase: u32,
    step_count: u64,
    pub state: SessionState,
    clock: u64,
    request_start_step: u64,
}

impl Session {
    pub fn new(id: impl Into<String>) -> Self {
        Session {
            id: id.into(),
            request_queue: VecDeque::new(),
            memory: Vec::new(),
            plan_history: Vec::new(),
            current_phase: 0,
            step_count: 0,
            state: SessionState::AwaitingUser,
            clock: 0,
            request_start_step: 0,
        }
    }

    pub fn memory(&self) -> &[MemoryEntry] {
        &self.memory
    }

    pub fn plan_history(&self) -> &[Plan] {
        &self.plan_history
    }

    pub fn current_phase(&self) -> u32 {
        self.current_phase
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// First step index of the request currently being served.
    pub fn request_start_step(&self) -> u64 {
        self.request_start_step
    }

    /// Marks the start of a new request at the current step count.
    pub fn begin_request(&mut self) {
        self.request_start_step = self.step_count;
    }

    /// Next value of the session's monotonic clock.
    pub fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    pub fn make_request(&mut self, text: &str) -> Result<UserRequest, SessionError> {
        if text.trim().is_empty() {
            return Err(SessionError::EmptyRequest);
        }
        let at = self.tick();
        Ok(UserRequest { id: format!("{}-r{at}", self.id), text: text.to_string(), submitted_at: at })
    }

    pub fn append_memory(&mut self, entry: MemoryEntry) -> Result<(), SessionError> {
        if entry.step_index != self.step_count {
            return Err(SessionError::StepIndexMismatch { expected: self.step_count, got: entry.step_index });
        }
        self.memory.push(entry);
        self.step_count += 1;
        Ok(())
    }

    /// Starts a new phase (an application was selected).
    pub fn begin_phase(&mut self) -> u32 {
        self.current_phase += 1;
        self.current_phase
    }

    /// Records a plan. The first plan of a phase must be global, later ones local.
    pub fn push_plan(&mut self, kind: PlanKind, steps: Vec<String>) -> Result<(), SessionError> {
        let phase = self.current_phase;
        let phase_has_plan = self.plan_history.last().is_some_and(|p| p.phase == phase);
        match (kind, phase_has_plan) {
            (PlanKind::Global, true) => {
                return Err(SessionError::PlanOrder(format!("phase {phase} already has a global plan")))
            }
            (PlanKind::Local, false) => {
                return Err(SessionError::PlanOrder(format!("phase {phase} has no global plan yet")))
            }
            _ => {}
        }
        self.plan_history.push(Plan { kind, steps, created_at_step: self.step_count, phase });
        Ok(())
    }

    pub fn memory_digest(&self, full_window: usize) -> String {
        memory_digest(&self.memory, full_window)
    }
}

/// Prompt-visible memory: the last `full_window` entries verbatim, preceded
/// by one elision line when older entries exist.
pub fn memory_digest(memory: &[MemoryEntry], full_window: usize) -> String {
    let window = full_window.max(1);
    let skip = memory.len().saturating_sub(window);
    let mut out = String::new();
    if skip > 0 {
        let noun = if skip == 1 { "step" } else { "steps" };
        out.push_str(&format!("{skip} earlier {noun} elided\n"));
    }
    for e in &memory[skip..] {
        out.push_str(&format_entry(e));
    }
    out
}

fn format_entry(e: &MemoryEntry) -> String {
    format!(
        "[step {} | phase {}]\nThoughts: {}\nAction: {}\nResult: {}\nComment: {}\n",
        e.step_index, e.phase_index, e.thoughts, e.action_summary, e.execution_result, e.comment
    )
}

/// One line of `session.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLogRecord {
    pub step_index: u64,
    pub phase: u32,
    pub agent: AgentKind,
    pub status: AgentStatus,
    pub selection: String,
    pub function: String,
    pub result_digest: String,
    pub sensitive: bool,
    pub confirmed: Option<bool>,
    pub executed: bool,
}

const DIGEST_CHARS: usize = 160;

/// Shortened result text for log records.
pub fn result_digest(result: &str) -> String {
    let mut chars = result.chars();
    let head: String = chars.by_ref().take(DIGEST_CHARS).collect();
    if chars.next().is_some() {
        format!("{head}…")
    } else {
        head
    }
}

/// Step log kept in memory and optionally mirrored to a JSON-lines file.
#[derive(Debug, Default)]
pub struct SessionLog {
    records: Vec<SessionLogRecord>,
    sink: Option<BufWriter<File>>,
}

impl SessionLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(SessionLog { records: Vec::new(), sink: Some(BufWriter::new(File::create(path)?)) })
    }

    pub fn append(&mut self, record: SessionLogRecord) -> std::io::Result<()> {
        if let Some(w) = self.sink.as_mut() {
            serde_json::to_writer(&mut *w, &record)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[SessionLogRecord] {
        &self.records
    }
}
