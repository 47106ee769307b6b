//! Session service behind the command builder UI: guideline lookup,
//! text/GUI sync, file navigation, command execution and AI assistance.
//!
//! Every session has a working directory confined to the sandbox root, the
//! current command text and GUI state, and a transcript. Mutations of one
//! session are applied one at a time; command output is streamed on the
//! session's websocket while sync requests keep being served.

mod error;
mod exec;
mod routes;
mod sandbox;
mod session;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use guide_core::gen::{LlmClient, PromptPack};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::broadcast;

pub use error::ApiError;
pub use exec::{cd_target, ExecPolicy, Stream, DEFAULT_DENYLIST};
pub use routes::{router, ExecutionResult};
pub use sandbox::{DirEntry, EntryKind, Sandbox};
pub use session::{GuiAction, Loaded, Registry, Session, SyncError, SyncView, TranscriptEntry};

pub const EXPLAIN_DEBOUNCE: Duration = Duration::from_millis(400);

pub struct ServerConfig {
    pub root: PathBuf,
    pub guidelines: PathBuf,
    /// `None` disables the AI endpoints.
    pub llm: Option<LlmClient>,
    pub prompts: PromptPack,
    pub policy: ExecPolicy,
    pub explain_debounce: Duration,
}

impl ServerConfig {
    pub fn new(root: impl Into<PathBuf>, guidelines: impl Into<PathBuf>) -> Self {
        ServerConfig {
            root: root.into(),
            guidelines: guidelines.into(),
            llm: None,
            prompts: PromptPack::builtin(),
            policy: ExecPolicy::default(),
            explain_debounce: EXPLAIN_DEBOUNCE,
        }
    }

    pub fn with_llm(mut self, llm: LlmClient) -> Self {
        self.llm = Some(llm);
        self
    }
}

/// Pushed on a session's stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Event {
    Sync(SyncView),
    Cwd { revision: u64, cwd: String },
    Transcript { index: usize, entry: TranscriptEntry },
    Exit { revision: u64, code: Option<i32>, duration_ms: u64 },
    Explanation { request: u64, text: String, summary: Option<String>, error: Option<String> },
}

pub struct SessionHandle {
    pub(crate) inner: tokio::sync::Mutex<Session>,
    pub(crate) events: broadcast::Sender<Event>,
}

impl SessionHandle {
    pub(crate) fn emit(&self, event: Event) {
        let _ = self.events.send(event);
    }

    pub(crate) fn record(&self, s: &mut Session, entry: TranscriptEntry) {
        s.transcript.push(entry.clone());
        self.emit(Event::Transcript { index: s.transcript.len() - 1, entry });
    }
}

pub struct AppState {
    pub(crate) sandbox: Sandbox,
    pub(crate) registry: Registry,
    pub(crate) llm: Option<Arc<LlmClient>>,
    pub(crate) prompts: PromptPack,
    pub(crate) policy: ExecPolicy,
    pub(crate) explain_debounce: Duration,
    pub(crate) sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
    pub(crate) ai_cache: Mutex<HashMap<String, String>>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> std::io::Result<Arc<Self>> {
        Ok(Arc::new(AppState {
            sandbox: Sandbox::new(&config.root)?,
            registry: Registry::new(config.guidelines),
            llm: config.llm.map(Arc::new),
            prompts: config.prompts,
            policy: config.policy,
            explain_debounce: config.explain_debounce,
            sessions: RwLock::new(HashMap::new()),
            ai_cache: Mutex::new(HashMap::new()),
        }))
    }

    pub(crate) fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        let sessions = self.sessions.read().unwrap_or_else(|e| e.into_inner());
        sessions.get(id).cloned().ok_or_else(|| ApiError::SessionNotFound(id.to_string()))
    }
}

/// Serves the API on `listener` until the process ends.
pub async fn serve(listener: TcpListener, app: Arc<AppState>) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "serving");
    axum::serve(listener, router(app)).await
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/api.md")]
mod book_api {}
