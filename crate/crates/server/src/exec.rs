use std::path::Path;
use std::process::Stdio;
use std::time::{Duration, Instant};

use guide_core::eval::split_commands;
use regex::Regex;
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncBufReadExt, AsyncRead, BufReader};
use tokio::process::Command;
use tokio::sync::mpsc;

use crate::error::ApiError;

/// Patterns refused by the default policy.
pub const DEFAULT_DENYLIST: [&str; 2] = [
    r"(^|[;&|(`]|\$\()\s*sudo\b",
    r"(^|[;&|(`]|\$\()\s*rm\s+(-\S+\s+)*-[A-Za-z]*(rf|fr)[A-Za-z]*\s+(-\S+\s+)*/(\*|\s|$)",
];

#[derive(Debug, Clone)]
pub struct ExecPolicy {
    /// Command words allowed to run; `None` allows any.
    pub allow: Option<Vec<String>>,
    pub deny: Vec<Regex>,
    pub timeout: Duration,
}

impl Default for ExecPolicy {
    fn default() -> Self {
        ExecPolicy {
            allow: None,
            deny: DEFAULT_DENYLIST.iter().map(|p| Regex::new(p).expect("valid pattern")).collect(),
            timeout: Duration::from_secs(30),
        }
    }
}

impl ExecPolicy {
    pub fn check(&self, text: &str) -> Result<(), ApiError> {
        if let Some(p) = self.deny.iter().find(|p| p.is_match(text)) {
            return Err(ApiError::CommandDenied(format!("matches `{}`", p.as_str())));
        }
        if let Some(allow) = &self.allow {
            let cmds = split_commands(text).map_err(ApiError::BadRequest)?;
            for c in cmds {
                let word = c.split_whitespace().next().unwrap_or_default();
                if !allow.iter().any(|a| a == word) {
                    return Err(ApiError::CommandDenied(format!("`{word}` is not allowed")));
                }
            }
        }
        Ok(())
    }
}

/// The directory argument of a plain `cd` line, or `None` for anything
/// else. A bare `cd` goes to the sandbox root.
pub fn cd_target(text: &str) -> Option<String> {
    let cmds = split_commands(text).ok()?;
    let [only] = cmds.as_slice() else { return None };
    let norm = |t: &str| t.split_whitespace().collect::<Vec<_>>().join(" ");
    if norm(only) != norm(text) {
        return None;
    }
    let rest = only.strip_prefix("cd")?;
    if !(rest.is_empty() || rest.starts_with(' ')) {
        return None;
    }
    let arg = rest.trim();
    if arg.is_empty() {
        return Some("/".to_string());
    }
    let quoted = arg.len() >= 2 && ['\'', '"'].iter().any(|&q| arg.starts_with(q) && arg.ends_with(q) && !arg[1..arg.len() - 1].contains(q));
    if quoted {
        Some(arg[1..arg.len() - 1].to_string())
    } else if arg.contains(' ') || arg.contains(['\'', '"']) {
        None
    } else {
        Some(arg.replace('\\', ""))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Stdout,
    Stderr,
}

#[derive(Debug)]
pub struct Finished {
    pub code: Option<i32>,
    pub duration_ms: u64,
}

/// Runs `text` with `sh -c` in `cwd`, sending each output line to `lines`
/// as it arrives. Lines of one stream arrive in order.
pub async fn run(text: &str, cwd: &Path, timeout: Duration, lines: mpsc::UnboundedSender<(Stream, String)>) -> Result<Finished, ApiError> {
    let start = Instant::now();
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(text)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .kill_on_drop(true)
        .spawn()
        .map_err(|e| ApiError::SpawnFailure(e.to_string()))?;
    let out = tokio::spawn(pump(child.stdout.take().expect("piped"), Stream::Stdout, lines.clone()));
    let err = tokio::spawn(pump(child.stderr.take().expect("piped"), Stream::Stderr, lines));
    match tokio::time::timeout(timeout, child.wait()).await {
        Ok(status) => {
            let status = status.map_err(|e| ApiError::SpawnFailure(e.to_string()))?;
            let _ = out.await;
            let _ = err.await;
            Ok(Finished { code: status.code(), duration_ms: start.elapsed().as_millis() as u64 })
        }
        Err(_) => {
            let _ = child.kill().await;
            out.abort();
            err.abort();
            Err(ApiError::Timeout { after_ms: timeout.as_millis() as u64 })
        }
    }
}

async fn pump(src: impl AsyncRead + Unpin, stream: Stream, tx: mpsc::UnboundedSender<(Stream, String)>) {
    let mut lines = BufReader::new(src).lines();
    while let Ok(Some(line)) = lines.next_line().await {
        if tx.send((stream, line)).is_err() {
            break;
        }
    }
}
