use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deskpilot_cli::service::{serve_blocking, HostedSession, ServiceState};
use deskpilot_cli::setup::{load_config, PolicyKind, SessionSpec};
use deskpilot_cli::term::{SharedLines, TerminalGate};
use deskpilot_cli::CliError;
use deskpilot_core::eval::{aggregate, load_suite, render_table, EvalOptions};
use deskpilot_core::orchestrator::{AutoApprove, AutoDeny, ConfirmationGate, ScreenshotStore};
use deskpilot_core::session::SessionLog;
use deskpilot_core::Orchestrator;

#[derive(Parser)]
#[command(name = "deskpilot", version, about = "Dual-agent GUI automation on a simulated desktop")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one request and print its outcome.
    Run {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long)]
        request: String,
        /// Print every session event before the outcome.
        #[arg(long)]
        events: bool,
    },
    /// Read requests from stdin, one per line, until `quit`.
    Interactive {
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Host a session behind the HTTP steering service.
    Serve {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, default_value_t = 8750)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value = "default")]
        session_id: String,
        /// Seconds to wait for a confirmation before treating it as denied.
        #[arg(long, default_value_t = 300)]
        confirm_timeout_secs: u64,
    },
    /// Run a task suite and report the four metrics.
    Bench {
        #[arg(long, default_value = "bench")]
        dir: PathBuf,
        #[arg(long, default_value_t = 3)]
        trials: u32,
        /// Where to write the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "limits", value_name = "K=V")]
        limits: Vec<String>,
    },
}

#[derive(Args)]
struct SessionArgs {
    /// Scenario file describing the simulated desktop.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = PolicyKind::Scripted)]
    policy: PolicyKind,
    /// Policy table for `--policy scripted`; defaults to policy.json beside the scenario.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Limit override, e.g. `max_steps=20`; repeatable.
    #[arg(long = "limits", value_name = "K=V")]
    limits: Vec<String>,
    /// Directory for the step log and, with --log-images, screenshots.
    #[arg(long)]
    log_dir: Option<PathBuf>,
    /// Save every screenshot as PNG under the log directory.
    #[arg(long)]
    log_images: bool,
    /// How sensitive actions are confirmed outside the service.
    #[arg(long, value_enum, default_value_t = ConfirmMode::Ask)]
    confirm: ConfirmMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConfirmMode {
    Ask,
    Approve,
    Deny,
}

const DEFAULT_LOG_DIR: &str = "deskpilot-logs";

impl SessionArgs {
    fn spec(&self) -> Result<SessionSpec, CliError> {
        Ok(SessionSpec {
            scenario: self.scenario.clone(),
            rules: self.rules.clone(),
            policy: self.policy,
            config: load_config(self.config.as_deref(), &self.limits)?,
        })
    }

    fn log_dir(&self) -> Option<PathBuf> {
        self.log_dir.clone().or_else(|| self.log_images.then(|| PathBuf::from(DEFAULT_LOG_DIR)))
    }

    fn screenshots(&self) -> Result<ScreenshotStore, CliError> {
        Ok(match self.log_dir().filter(|_| self.log_images) {
            Some(dir) => ScreenshotStore::with_dir(dir.join("images"))?,
            None => ScreenshotStore::in_memory(),
        })
    }

    fn orchestrator(&self, session_id: &str) -> Result<Orchestrator, CliError> {
        let mut orch = self.spec()?.orchestrator(session_id)?.with_screenshots(self.screenshots()?);
        if let Some(dir) = self.log_dir() {
            std::fs::create_dir_all(&dir)?;
            orch = orch.with_log(SessionLog::to_file(dir.join("session.jsonl"))?);
        }
        Ok(orch)
    }

    fn gate(&self, lines: impl FnOnce() -> SharedLines) -> Box<dyn ConfirmationGate> {
        match self.confirm {
            ConfirmMode::Ask => Box::new(TerminalGate { lines: lines() }),
            ConfirmMode::Approve => Box::new(AutoApprove),
            ConfirmMode::Deny => Box::new(AutoDeny),
        }
    }
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run { session, request, events } => {
            let gate = session.gate(SharedLines::stdin);
            let mut orch = session.orchestrator("run")?.with_gate(gate);
            let outcome = orch.run_request(&request);
            if events {
                for e in orch.feed().all() {
                    print_json(&e);
                }
            }
            print_json(&outcome);
            Ok(if outcome.succeeded { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Interactive { session } => {
            let lines = SharedLines::stdin();
            let gate = session.gate(|| lines.clone());
            let mut orch = session.orchestrator("interactive")?.with_gate(gate);
            orch.interactive_loop(lines.reader(), std::io::stdout());
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { session, port, host, session_id, confirm_timeout_secs } => {
            let orch = session.orchestrator(&session_id)?;
            let hosted =
                HostedSession::spawn(orch, session.screenshots()?, Duration::from_secs(confirm_timeout_secs));
            serve_blocking(SocketAddr::new(host, port), Arc::new(ServiceState::new([hosted])))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { dir, trials, out, config, limits } => {
            let config = load_config(config.as_deref(), &limits)?;
            let options = EvalOptions { count_app_steps: config.metrics.count_app_steps, limits: config.limits };
            bench(&dir, trials, out.as_deref(), &options)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn bench(dir: &Path, trials: u32, out: Option<&Path>, options: &EvalOptions) -> Result<(), CliError> {
    let suite = load_suite(dir)?;
    let results = suite.iter().map(|t| t.run(trials, options)).collect::<Result<Vec<_>, _>>()?;
    let tasks: Vec<_> = suite.iter().map(|t| t.task.clone()).collect();
    let report = aggregate(&results, &tasks)?;
    print!("{}", render_table(&report));
    if let Some(path) = out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(path, json + "\n")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("DESKPILOT_LOG"))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
