use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const API_KEY_VAR: &str = "GUIDE_LLM_API_KEY";
pub const BASE_URL_VAR: &str = "GUIDE_LLM_BASE_URL";
const DEFAULT_BASE_URL: &str = "https://api.anthropic.com";

/// Sampling parameters sent with every request. They are part of the
/// cassette key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub thinking_budget: Option<u32>,
}

impl Default for LlmParams {
    fn default() -> Self {
        LlmParams {
            model: "claude-3-7-sonnet-20250219".into(),
            temperature: 1.0,
            max_tokens: 16000,
            thinking_budget: Some(4096),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

/// Which step of the pipeline a request belongs to. Not part of the
/// cassette key; scripted backends use it for routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    SuiteBase,
    SuiteVariety,
    Draft,
    SyntaxAgent,
    LinterAgent,
    TestAgent,
    Generate,
    Explain,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("LLM unavailable: {0}")]
    Unavailable(String),
    #[error("no recorded response for request {key} (stage {stage})")]
    CassetteMiss { key: String, stage: Stage },
    #[error("LLM request failed: {0}")]
    Request(String),
    #[error("cassette store: {0}")]
    Store(String),
    #[error("scripted backend has no response for stage {0}")]
    ScriptExhausted(Stage),
}

/// Anything that can answer a prompt.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, stage: Stage, prompt: &Prompt, params: &LlmParams) -> Result<String, LlmError>;
}

/// A recorded exchange. One file per exchange, named after its key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cassette {
    pub key: String,
    pub prompt: Prompt,
    pub params: LlmParams,
    pub response: String,
    pub timestamp: String,
}

/// SHA-256 over the canonical JSON of the prompt and parameters.
pub fn cassette_key(prompt: &Prompt, params: &LlmParams) -> String {
    let canonical = json!({ "system": prompt.system, "user": prompt.user, "params": params });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

/// A directory of `<key>.json` cassettes.
#[derive(Debug, Clone)]
pub struct CassetteStore {
    dir: PathBuf,
}

impl CassetteStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CassetteStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<Cassette>, LlmError> {
        let path = self.path(key);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| LlmError::Store(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map(Some).map_err(|e| LlmError::Store(format!("{}: {e}", path.display())))
    }

    pub fn put(&self, cassette: &Cassette) -> Result<(), LlmError> {
        fs::create_dir_all(&self.dir).map_err(|e| LlmError::Store(e.to_string()))?;
        let text = serde_json::to_string_pretty(cassette).map_err(|e| LlmError::Store(e.to_string()))?;
        fs::write(self.path(&cassette.key), text + "\n").map_err(|e| LlmError::Store(e.to_string()))
    }

    /// All cassettes in the directory, sorted by key.
    pub fn all(&self) -> Result<Vec<Cassette>, LlmError> {
        let mut out = Vec::new();
        let entries = match fs::read_dir(&self.dir) {
            Ok(e) => e,
            Err(_) => return Ok(out),
        };
        for entry in entries {
            let path = entry.map_err(|e| LlmError::Store(e.to_string()))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let key = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                if let Some(c) = self.get(&key)? {
                    out.push(c);
                }
            }
        }
        out.sort_by(|a, b| a.key.cmp(&b.key));
        Ok(out)
    }
}

enum Mode {
    Direct(Box<dyn LlmBackend>),
    Record(Box<dyn LlmBackend>, CassetteStore),
    Replay(CassetteStore),
}

/// The pipeline's handle on the model: a backend called directly, a
/// backend whose answers are recorded, or replay from recordings.
pub struct LlmClient {
    mode: Mode,
    params: LlmParams,
    clock: Box<dyn Fn() -> String + Send + Sync>,
    calls: Mutex<Vec<(Stage, String)>>,
}

impl LlmClient {
    pub fn direct(backend: impl LlmBackend + 'static, params: LlmParams) -> Self {
        Self::with_mode(Mode::Direct(Box::new(backend)), params)
    }

    pub fn record(backend: impl LlmBackend + 'static, dir: impl Into<PathBuf>, params: LlmParams) -> Self {
        Self::with_mode(Mode::Record(Box::new(backend), CassetteStore::new(dir)), params)
    }

    pub fn replay(dir: impl Into<PathBuf>, params: LlmParams) -> Self {
        Self::with_mode(Mode::Replay(CassetteStore::new(dir)), params)
    }

    /// Calls the hosted model, reading the key from `GUIDE_LLM_API_KEY`.
    pub fn live(params: LlmParams) -> Result<Self, LlmError> {
        Ok(Self::direct(AnthropicBackend::from_env()?, params))
    }

    fn with_mode(mode: Mode, params: LlmParams) -> Self {
        LlmClient {
            mode,
            params,
            clock: Box::new(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Fixes the timestamp written into recorded cassettes.
    pub fn with_clock(mut self, clock: impl Fn() -> String + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn params(&self) -> &LlmParams {
        &self.params
    }

    /// Stages and cassette keys of every request made so far.
    pub fn calls(&self) -> Vec<(Stage, String)> {
        self.calls.lock().map(|c| c.clone()).unwrap_or_default()
    }

    pub fn complete(&self, stage: Stage, prompt: &Prompt) -> Result<String, LlmError> {
        let key = cassette_key(prompt, &self.params);
        if let Ok(mut calls) = self.calls.lock() {
            calls.push((stage, key.clone()));
        }
        tracing::debug!(%stage, %key, "llm request");
        match &self.mode {
            Mode::Direct(backend) => backend.complete(stage, prompt, &self.params),
            Mode::Replay(store) => match store.get(&key)? {
                Some(c) => Ok(c.response),
                None => Err(LlmError::CassetteMiss { key, stage }),
            },
            Mode::Record(backend, store) => {
                let response = backend.complete(stage, prompt, &self.params)?;
                store.put(&Cassette {
                    key,
                    prompt: prompt.clone(),
                    params: self.params.clone(),
                    response: response.clone(),
                    timestamp: (self.clock)(),
                })?;
                Ok(response)
            }
        }
    }
}

/// Answers from per-stage queues, in order.
#[derive(Default)]
pub struct ScriptedBackend {
    queues: Mutex<Vec<(Stage, VecDeque<String>)>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(self, stage: Stage, response: impl Into<String>) -> Self {
        {
            let mut queues = self.queues.lock().expect("unpoisoned");
            match queues.iter_mut().find(|(s, _)| *s == stage) {
                Some((_, q)) => q.push_back(response.into()),
                None => queues.push((stage, VecDeque::from([response.into()]))),
            }
        }
        self
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, stage: Stage, _: &Prompt, _: &LlmParams) -> Result<String, LlmError> {
        let mut queues = self.queues.lock().map_err(|_| LlmError::ScriptExhausted(stage))?;
        queues
            .iter_mut()
            .find(|(s, _)| *s == stage)
            .and_then(|(_, q)| q.pop_front())
            .ok_or(LlmError::ScriptExhausted(stage))
    }
}

/// Answers by calling a function of the stage and prompt.
pub struct RouterBackend<F>(pub F);

impl<F> LlmBackend for RouterBackend<F>
where
    F: Fn(Stage, &Prompt) -> Option<String> + Send + Sync,
{
    fn complete(&self, stage: Stage, prompt: &Prompt, _: &LlmParams) -> Result<String, LlmError> {
        (self.0)(stage, prompt).ok_or(LlmError::ScriptExhausted(stage))
    }
}

/// The Anthropic messages API.
pub struct AnthropicBackend {
    client: reqwest::blocking::Client,
    api_key: String,
    base_url: String,
}

impl AnthropicBackend {
    pub fn from_env() -> Result<Self, LlmError> {
        let api_key = std::env::var(API_KEY_VAR)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::Unavailable(format!("{API_KEY_VAR} is not set")))?;
        let base_url = std::env::var(BASE_URL_VAR).unwrap_or_else(|_| DEFAULT_BASE_URL.into());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(600))
            .build()
            .map_err(|e| LlmError::Unavailable(e.to_string()))?;
        Ok(AnthropicBackend { client, api_key, base_url })
    }
}

#[derive(Deserialize)]
struct MessagesResponse {
    content: Vec<ContentBlock>,
}

#[derive(Deserialize)]
struct ContentBlock {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    text: Option<String>,
}

impl LlmBackend for AnthropicBackend {
    fn complete(&self, _: Stage, prompt: &Prompt, params: &LlmParams) -> Result<String, LlmError> {
        let mut body = json!({
            "model": params.model,
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
            "system": prompt.system,
            "messages": [{ "role": "user", "content": prompt.user }],
        });
        if let Some(budget) = params.thinking_budget {
            body["thinking"] = json!({ "type": "enabled", "budget_tokens": budget });
        }
        let resp = self
            .client
            .post(format!("{}/v1/messages", self.base_url.trim_end_matches('/')))
            .header("x-api-key", &self.api_key)
            .header("anthropic-version", "2023-06-01")
            .json(&body)
            .send()
            .map_err(|e| LlmError::Request(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(LlmError::Request(format!("{status}: {text}")));
        }
        let parsed: MessagesResponse = resp.json().map_err(|e| LlmError::Request(e.to_string()))?;
        Ok(parsed.content.into_iter().filter(|b| b.kind == "text").filter_map(|b| b.text).collect::<Vec<_>>().join(""))
    }
}
