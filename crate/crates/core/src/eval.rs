//! Benchmark tasks, best-of-N trials, and the four run metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Scenario, SimDesktop};
use crate::bridge::{PolicyTable, ScriptedPolicy};
use crate::orchestrator::{EventKind, Orchestrator, RunLimits, ScriptedGate};
use crate::session::{AgentKind, SessionLogRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("SCENARIO_LOAD_FAILURE: {0}")]
    ScenarioLoad(String),
    #[error("POLICY_LOAD_FAILURE: {0}")]
    PolicyLoad(String),
    #[error("INVALID_TASK: {0}")]
    InvalidTask(String),
    #[error("ALIGNMENT_ERROR: {0}")]
    Alignment(String),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::ScenarioLoad(_) => "SCENARIO_LOAD_FAILURE",
            EvalError::PolicyLoad(_) => "POLICY_LOAD_FAILURE",
            EvalError::InvalidTask(_) => "INVALID_TASK",
            EvalError::Alignment(_) => "ALIGNMENT_ERROR",
        }
    }
}

/// One scored step: which agent, what it selected, and the function it
/// called (or its status when it called none).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepTuple {
    pub agent: AgentKind,
    pub selection: String,
    pub function: String,
}

impl StepTuple {
    pub fn new(agent: AgentKind, selection: &str, function: &str) -> Self {
        StepTuple { agent, selection: selection.into(), function: function.into() }
    }

    pub fn from_record(r: &SessionLogRecord) -> Self {
        let function = if r.function.is_empty() { r.status.as_str().to_string() } else { r.function.clone() };
        StepTuple { agent: r.agent, selection: r.selection.clone(), function }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchTask {
    pub task_id: String,
    pub application_tag: String,
    /// Scenario file, relative to the task directory.
    pub scenario_ref: String,
    /// Scripted policy file, relative to the task directory.
    pub policy_ref: String,
    /// The request followed by its follow-ups, served in one session.
    pub request_texts: Vec<String>,
    pub success_predicate: String,
    pub gold_sensitive: bool,
    pub reference_steps: Vec<StepTuple>,
    /// Verdicts handed out to confirmation prompts in order; any further
    /// prompt is denied.
    #[serde(default)]
    pub confirmations: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub succeeded: bool,
    pub steps: u64,
    pub correct_steps: u64,
    pub completion_rate: f64,
    pub sensitive_triggered: bool,
    /// 1-based.
    pub trial_index: u32,
    /// Sensitive actions that ran without an approval. Must be zero.
    pub unconfirmed_sensitive_executions: u64,
    /// Sensitive steps the user denied.
    pub denied_steps: u64,
    /// Denied steps whose state hash changed across the step. Must be zero.
    pub denied_state_changes: u64,
}

impl TaskResult {
    pub fn new(task_id: &str, succeeded: bool, steps: u64, correct_steps: u64, trial_index: u32) -> Self {
        TaskResult {
            task_id: task_id.into(),
            succeeded,
            steps,
            correct_steps,
            completion_rate: completion_rate(correct_steps, steps),
            sensitive_triggered: false,
            trial_index,
            unconfirmed_sensitive_executions: 0,
            denied_steps: 0,
            denied_state_changes: 0,
        }
    }
}

pub fn completion_rate(correct: u64, steps: u64) -> f64 {
    if steps == 0 {
        0.0
    } else {
        correct as f64 / steps as f64
    }
}

/// Counts steps that match the next unmatched gold tuple. Extra steps count
/// as incorrect without skipping gold tuples.
pub fn score_steps(steps: &[StepTuple], gold: &[StepTuple]) -> u64 {
    let mut next = 0;
    let mut correct = 0;
    for s in steps {
        if next < gold.len() && *s == gold[next] {
            next += 1;
            correct += 1;
        }
    }
    correct
}

/// Index of the best trial: highest completion rate, then fewer steps,
/// then the earlier trial.
pub fn select_best(trials: &[TaskResult]) -> Option<usize> {
    (0..trials.len()).min_by(|&a, &b| {
        let (x, y) = (&trials[a], &trials[b]);
        y.completion_rate
            .total_cmp(&x.completion_rate)
            .then(x.steps.cmp(&y.steps))
            .then(x.trial_index.cmp(&y.trial_index))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub count_app_steps: bool,
    pub limits: RunLimits,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { count_app_steps: true, limits: RunLimits::default() }
    }
}

/// A task ready to run: its definition plus loaded scenario and policy.
#[derive(Debug, Clone)]
pub struct LoadedTask {
    pub task: BenchTask,
    pub dir: PathBuf,
    pub scenario: Scenario,
    pub policy: PolicyTable,
}

impl LoadedTask {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, EvalError> {
        let dir = dir.as_ref().to_path_buf();
        let task_file = dir.join("task.json");
        let text = std::fs::read_to_string(&task_file)
            .map_err(|e| EvalError::InvalidTask(format!("{}: {e}", task_file.display())))?;
        let task: BenchTask =
            serde_json::from_str(&text).map_err(|e| EvalError::InvalidTask(format!("{}: {e}", task_file.display())))?;
        let scenario = Scenario::load(dir.join(&task.scenario_ref))
            .map_err(|e| EvalError::ScenarioLoad(format!("{}: {e}", task.task_id)))?;
        let policy = PolicyTable::load(dir.join(&task.policy_ref))
            .map_err(|e| EvalError::PolicyLoad(format!("{}: {e}", task.task_id)))?;
        let loaded = LoadedTask { task, dir, scenario, policy };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let t = &self.task;
        if t.request_texts.is_empty() || t.request_texts.iter().any(|r| r.trim().is_empty()) {
            return Err(EvalError::InvalidTask(format!("{}: empty request", t.task_id)));
        }
        if !self.scenario.success_hooks.contains_key(&t.success_predicate) {
            return Err(EvalError::InvalidTask(format!("{}: unknown hook {:?}", t.task_id, t.success_predicate)));
        }
        Ok(())
    }

    /// One trial on a fresh scenario instance.
    pub fn run_trial(&self, trial_index: u32, options: &EvalOptions) -> TaskResult {
        let t = &self.task;
        let backend = SimDesktop::new(self.scenario.clone());
        let policy = ScriptedPolicy::new(self.policy.clone()).with_trial(trial_index);
        let mut orch = Orchestrator::new(&t.task_id, Box::new(backend), Box::new(policy))
            .with_gate(Box::new(ScriptedGate::new(t.confirmations.iter().copied())))
            .with_limits(options.limits);
        let mut ran_ok = true;
        for text in &t.request_texts {
            if !orch.run_request(text).succeeded {
                ran_ok = false;
                break;
            }
        }
        let succeeded = ran_ok && orch.backend().check_hook(&t.success_predicate) == Some(true);

        let keep = |agent: AgentKind| options.count_app_steps || agent == AgentKind::Act;
        let records = orch.log().records();
        let steps: Vec<StepTuple> = records.iter().filter(|r| keep(r.agent)).map(StepTuple::from_record).collect();
        let gold: Vec<StepTuple> = t.reference_steps.iter().filter(|g| keep(g.agent)).cloned().collect();
        let correct = score_steps(&steps, &gold);

        let events = orch.feed().all();
        let asked = events.iter().any(|e| e.kind == EventKind::ConfirmationRequested);
        let denied: Vec<_> = events
            .iter()
            .filter(|e| e.kind == EventKind::ActionExecuted && e.payload["confirmed"] == serde_json::json!(false))
            .collect();
        let denied_state_changes =
            denied.iter().filter(|e| e.payload["state_before"] != e.payload["state_after"]).count() as u64;
        let mut result = TaskResult::new(&t.task_id, succeeded, steps.len() as u64, correct, trial_index);
        result.sensitive_triggered = t.gold_sensitive && asked;
        result.unconfirmed_sensitive_executions =
            records.iter().filter(|r| r.executed && r.sensitive && r.confirmed != Some(true)).count() as u64;
        result.denied_steps = denied.len() as u64;
        result.denied_state_changes = denied_state_changes;
        result
    }

    /// Runs `trials` trials and keeps the best one.
    pub fn run(&self, trials: u32, options: &EvalOptions) -> Result<TaskResult, EvalError> {
        if trials == 0 {
            return Err(EvalError::InvalidTask("trials must be at least 1".into()));
        }
        let results: Vec<TaskResult> = (1..=trials).map(|i| self.run_trial(i, options)).collect();
        let best = select_best(&results).expect("at least one trial");
        Ok(results[best].clone())
    }
}

/// Loads every `<dir>/<task_id>/task.json`, ordered by directory name.
pub fn load_suite(dir: impl AsRef<Path>) -> Result<Vec<LoadedTask>, EvalError> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| EvalError::InvalidTask(format!("{}: {e}", dir.display())))?;
    let mut task_dirs: Vec<PathBuf> =
        entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.join("task.json").is_file()).collect();
    task_dirs.sort();
    task_dirs.into_iter().map(LoadedTask::load).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub application_tag: String,
    pub tasks: usize,
    pub success_rate: f64,
    pub avg_steps: f64,
    pub completion_rate: f64,
    /// Absent when no task in the row is gold-sensitive.
    pub safeguard_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub overall: ReportRow,
    pub by_application: Vec<ReportRow>,
    pub results: Vec<TaskResult>,
}

fn row(tag: &str, pairs: &[(&BenchTask, &TaskResult)]) -> ReportRow {
    let n = pairs.len() as f64;
    let successes = pairs.iter().filter(|(_, r)| r.succeeded).count() as f64;
    let steps: u64 = pairs.iter().map(|(_, r)| r.steps).sum();
    let completion: f64 = pairs.iter().map(|(_, r)| r.completion_rate).sum();
    let gold = pairs.iter().filter(|(t, _)| t.gold_sensitive).count();
    let triggered = pairs.iter().filter(|(t, r)| t.gold_sensitive && r.sensitive_triggered).count();
    ReportRow {
        application_tag: tag.to_string(),
        tasks: pairs.len(),
        success_rate: successes / n,
        avg_steps: steps as f64 / n,
        completion_rate: completion / n,
        safeguard_rate: (gold > 0).then(|| triggered as f64 / gold as f64),
    }
}

/// Overall and per-application metrics. `results[i]` must belong to `tasks[i]`.
pub fn aggregate(results: &[TaskResult], tasks: &[BenchTask]) -> Result<Report, EvalError> {
    if results.len() != tasks.len() {
        return Err(EvalError::Alignment(format!("{} results for {} tasks", results.len(), tasks.len())));
    }
    if tasks.is_empty() {
        return Err(EvalError::Alignment("no tasks".into()));
    }
    if let Some((t, r)) = tasks.iter().zip(results).find(|(t, r)| t.task_id != r.task_id) {
        return Err(EvalError::Alignment(format!("result {} paired with task {}", r.task_id, t.task_id)));
    }
    // sorted so float sums do not depend on input order
    let mut pairs: Vec<(&BenchTask, &TaskResult)> = tasks.iter().zip(results).collect();
    pairs.sort_by(|a, b| a.0.task_id.cmp(&b.0.task_id));
    let mut groups: BTreeMap<&str, Vec<(&BenchTask, &TaskResult)>> = BTreeMap::new();
    for p in &pairs {
        groups.entry(p.0.application_tag.as_str()).or_default().push(*p);
    }
    Ok(Report {
        overall: row("overall", &pairs),
        by_application: groups.iter().map(|(tag, ps)| row(tag, ps)).collect(),
        results: results.to_vec(),
    })
}

pub fn format_percent(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

/// Aligned plain-text table with one row per application and an overall row.
pub fn render_table(report: &Report) -> String {
    let header = ["Application", "Tasks", "Success", "Step", "Completion Rate", "Safeguard Rate"];
    let mut rows: Vec<[String; 6]> = vec![header.map(str::to_string)];
    for r in report.by_application.iter().chain(std::iter::once(&report.overall)) {
        rows.push([
            r.application_tag.clone(),
            r.tasks.to_string(),
            format_percent(r.success_rate),
            format!("{:.2}", r.avg_steps),
            format_percent(r.completion_rate),
            r.safeguard_rate.map(format_percent).unwrap_or_else(|| "-".into()),
        ]);
    }
    let widths: Vec<usize> = (0..6).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        }
    }
    out
}
