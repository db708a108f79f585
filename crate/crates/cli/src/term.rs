//! Terminal plumbing: one stdin reader shared by the request loop and the
//! confirmation prompt.

use std::collections::VecDeque;
use std::io::{self, BufRead, Read, Write};
use std::sync::mpsc::{self, Receiver};
use std::sync::{Arc, Mutex};

use deskpilot_core::orchestrator::{ConfirmationGate, ConfirmationRequest};

/// Lines of an input stream, read on a background thread.
#[derive(Clone)]
pub struct SharedLines {
    rx: Arc<Mutex<Receiver<String>>>,
}

impl SharedLines {
    pub fn spawn(input: impl BufRead + Send + 'static) -> Self {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in input.lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        SharedLines { rx: Arc::new(Mutex::new(rx)) }
    }

    pub fn stdin() -> Self {
        Self::spawn(io::BufReader::new(io::stdin()))
    }

    /// Next line, or `None` at end of input.
    pub fn next_line(&self) -> Option<String> {
        self.rx.lock().unwrap_or_else(|p| p.into_inner()).recv().ok()
    }

    /// A reader yielding the remaining lines, newline-terminated.
    pub fn reader(&self) -> io::BufReader<LineReader> {
        io::BufReader::new(LineReader { lines: self.clone(), pending: VecDeque::new() })
    }
}

pub struct LineReader {
    lines: SharedLines,
    pending: VecDeque<u8>,
}

impl Read for LineReader {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.pending.is_empty() {
            match self.lines.next_line() {
                Some(line) => {
                    self.pending.extend(line.bytes());
                    self.pending.push_back(b'\n');
                }
                None => return Ok(0),
            }
        }
        let n = buf.len().min(self.pending.len());
        for (slot, byte) in buf.iter_mut().zip(self.pending.drain(..n)) {
            *slot = byte;
        }
        Ok(n)
    }
}

/// Asks on stderr and reads `y`/`n` from the shared input.
/// End of input counts as a denial.
pub struct TerminalGate {
    pub lines: SharedLines,
}

impl ConfirmationGate for TerminalGate {
    fn decide(&mut self, request: &ConfirmationRequest) -> bool {
        let mut err = io::stderr();
        let _ = write!(err, "confirm step {}: {} [y/N] ", request.step_index, request.summary());
        let _ = err.flush();
        self.lines.next_line().is_some_and(|l| matches!(l.trim().to_ascii_lowercase().as_str(), "y" | "yes"))
    }
}
