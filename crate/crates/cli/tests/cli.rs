use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};
use std::sync::mpsc;

use serde_json::{json, Value};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(task: &str) -> String {
    root().join("bench").join(task).join("scenario.json").display().to_string()
}

fn deskpilot(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_deskpilot"));
    cmd.args(args)
        .env_remove("DESKPILOT_MODEL_URL")
        .env_remove("DESKPILOT_MODEL_KEY")
        .env_remove("DESKPILOT_MODEL")
        .stdin(Stdio::null());
    cmd
}

fn last_json(out: &Output) -> Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(stdout.lines().last().unwrap_or_default()).unwrap_or(Value::Null)
}

#[test]
fn run_prints_outcome_and_exit_status() {
    let out = deskpilot(&[
        "run",
        "--scenario",
        &scenario("mail_send_lunch"),
        "--request",
        "Email bo@example.com that lunch is confirmed",
        "--confirm",
        "approve",
    ])
    .output()
    .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(last_json(&out), json!({"succeeded": true, "steps": 7, "phases": 1, "failure_reason": null}));
}

#[test]
fn run_with_events_streams_the_feed() {
    let out = deskpilot(&["run", "--scenario", &scenario("mail_read_ana"), "--request", "Read the message from Ana", "--events"])
        .output()
        .unwrap();
    let lines: Vec<Value> =
        String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["kind"], json!("ROUND_STARTED"));
    assert_eq!(lines[lines.len() - 2]["kind"], json!("REQUEST_COMPLETED"));
    let sequences: Vec<u64> = lines[..lines.len() - 1].iter().map(|e| e["sequence"].as_u64().unwrap()).collect();
    assert_eq!(sequences, (1..lines.len() as u64).collect::<Vec<_>>());
}

#[test]
fn ask_mode_reads_the_verdict_from_stdin() {
    let mut child = deskpilot(&[
        "run",
        "--scenario",
        &scenario("mail_send_lunch"),
        "--request",
        "Email bo@example.com that lunch is confirmed",
    ])
    .stdin(Stdio::piped())
    .stdout(Stdio::piped())
    .stderr(Stdio::piped())
    .spawn()
    .unwrap();
    child.stdin.take().unwrap().write_all(b"n\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("confirm step"));
    assert_eq!(last_json(&out)["failure_reason"], Value::Null);
}

#[test]
fn config_limits_apply() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("deskpilot.toml");
    std::fs::write(&config, "[limits]\nmax_steps_per_request = 2\n").unwrap();
    let out = deskpilot(&[
        "run",
        "--scenario",
        &scenario("mail_read_ana"),
        "--request",
        "Read the message from Ana",
        "--config",
        config.to_str().unwrap(),
    ])
    .output()
    .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(last_json(&out)["failure_reason"], json!("STEP_LIMIT_EXCEEDED"));

    let out = deskpilot(&["run", "--scenario", &scenario("mail_read_ana"), "--request", "x", "--limits", "max_steps=0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("INVALID_LIMIT"));

    std::fs::write(&config, "[limits]\nmax_step = 2\n").unwrap();
    let out = deskpilot(&["run", "--scenario", &scenario("mail_read_ana"), "--request", "x", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn log_images_writes_pngs_and_step_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = deskpilot(&[
        "run",
        "--scenario",
        &scenario("mail_read_ana"),
        "--request",
        "Read the message from Ana",
        "--log-dir",
        dir.path().to_str().unwrap(),
        "--log-images",
    ])
    .output()
    .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("images/step2_annotated.png").exists());
    let log = std::fs::read_to_string(dir.path().join("session.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 4);
}

#[test]
fn interactive_answers_each_line_until_quit() {
    let mut child = deskpilot(&["interactive", "--scenario", &scenario("mail_read_ana")])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"Read the message from Ana\nquit\nignored\n").unwrap();
    let out = child.wait_with_output().unwrap();
    let lines: Vec<&str> = std::str::from_utf8(&out.stdout).unwrap().lines().collect();
    assert_eq!(lines.len(), 1);
    assert_eq!(serde_json::from_str::<Value>(lines[0]).unwrap()["succeeded"], json!(true));
}

#[test]
fn bench_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = deskpilot(&[
        "bench",
        "--dir",
        root().join("bench").to_str().unwrap(),
        "--trials",
        "3",
        "--out",
        report.to_str().unwrap(),
    ])
    .output()
    .unwrap();
    assert!(out.status.success());
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.starts_with("Application"));
    assert!(table.lines().any(|l| l.starts_with("overall") && l.contains("100.0%")));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(report["overall"]["tasks"], json!(20));
    assert_eq!(report["overall"]["safeguard_rate"], json!(1.0));
}

#[test]
fn live_policy_without_endpoint_is_refused() {
    let out = deskpilot(&["run", "--scenario", &scenario("mail_read_ana"), "--request", "x", "--policy", "live"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(last_json(&out)["failure_reason"], json!("ADAPTER_REFUSAL"));
}

/// Serves one canned chat-completions reply per connection and forwards
/// each request body.
fn mock_model(replies: Vec<String>) -> (String, mpsc::Receiver<Value>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for (stream, reply) in listener.incoming().zip(replies) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let _ = tx.send(serde_json::from_slice(&body).unwrap());
            let payload = json!({"choices": [{"message": {"role": "assistant", "content": reply}}]}).to_string();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                payload.len(),
                payload
            )
            .unwrap();
        }
    });
    (url, rx)
}

#[test]
fn live_policy_talks_to_a_chat_endpoint() {
    let finish = json!({
        "Observation": "nothing to do", "Thoughts": "done",
        "SelectedApp": {"label": "", "name": ""},
        "Status": "FINISH", "Plan": [], "Comment": "all set"
    });
    let (url, requests) = mock_model(vec![finish.to_string()]);
    let out = deskpilot(&["run", "--scenario", &scenario("mail_read_ana"), "--request", "nothing", "--policy", "live"])
        .env("DESKPILOT_MODEL_URL", &url)
        .env("DESKPILOT_MODEL", "vision-model")
        .env("DESKPILOT_MODEL_KEY", "secret")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(last_json(&out)["steps"], json!(1));

    let body = requests.recv().unwrap();
    assert_eq!(body["model"], json!("vision-model"));
    let content = body["messages"][0]["content"].as_array().unwrap();
    assert!(content[0]["text"].as_str().unwrap().contains("nothing"));
    let images: Vec<&Value> = content.iter().filter(|c| c["type"] == json!("image_url")).collect();
    assert_eq!(images.len(), 1);
    assert!(images[0]["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,"));
}
