use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::response::Response;
use axum::routing::{get, post};
use axum::{Json, Router};
use guide_core::gen::{cassette_key, command_from_reply, explain_prompt, generate_prompt, LlmError, Prompt, Stage};
use guide_core::gui::{search_flags, FlattenError, GuiSpec};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{broadcast, mpsc};

use crate::error::ApiError;
use crate::exec::{self, cd_target, Stream};
use crate::sandbox::DirEntry;
use crate::session::{GuiAction, Session, SyncView, TranscriptEntry};
use crate::{AppState, Event, SessionHandle};

type App = State<Arc<AppState>>;

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/status", get(status))
        .route("/api/sessions", post(open_session))
        .route("/api/sessions/{id}", get(snapshot))
        .route("/api/sessions/{id}/ls", get(list_dir))
        .route("/api/sessions/{id}/cd", post(change_dir))
        .route("/api/sessions/{id}/text", post(set_text))
        .route("/api/sessions/{id}/gui-action", post(gui_action))
        .route("/api/sessions/{id}/execute", post(execute))
        .route("/api/sessions/{id}/ai/generate", post(ai_generate))
        .route("/api/sessions/{id}/ai/explain", post(ai_explain))
        .route("/api/sessions/{id}/stream", get(stream))
        .route("/api/spec/{command}", get(get_spec))
        .route("/api/spec/{command}/search", get(search_spec))
        .with_state(app)
}

async fn status(State(app): App) -> Json<Value> {
    Json(json!({ "ai": app.llm.is_some() }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub cwd: String,
    pub revision: u64,
}

async fn open_session(State(app): App) -> Json<SessionInfo> {
    let id = uuid::Uuid::new_v4().simple().to_string();
    let root = app.sandbox.root().to_path_buf();
    let (events, _) = broadcast::channel(1024);
    let handle = Arc::new(SessionHandle { inner: tokio::sync::Mutex::new(Session::new(id.clone(), root)), events });
    app.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id.clone(), handle);
    tracing::info!(session = %id, "opened");
    Json(SessionInfo { id, cwd: "/".into(), revision: 0 })
}

async fn snapshot(State(app): App, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let h = app.session(&id)?;
    let s = h.inner.lock().await;
    Ok(Json(json!({
        "id": s.id,
        "cwd": app.sandbox.display(&s.cwd),
        "sync": s.view(None, None),
        "transcript": s.transcript,
    })))
}

#[derive(Debug, Deserialize)]
struct PathQuery {
    path: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Listing {
    pub path: String,
    pub entries: Vec<DirEntry>,
}

async fn list_dir(State(app): App, Path(id): Path<String>, Query(q): Query<PathQuery>) -> Result<Json<Listing>, ApiError> {
    let h = app.session(&id)?;
    let cwd = h.inner.lock().await.cwd.clone();
    let dir = app.sandbox.resolve_dir(&cwd, q.path.as_deref().unwrap_or("."))?;
    Ok(Json(Listing { path: app.sandbox.display(&dir), entries: app.sandbox.list(&dir)? }))
}

#[derive(Debug, Deserialize)]
struct CdBody {
    path: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CwdView {
    pub revision: u64,
    pub cwd: String,
}

fn cd_word(path: &str) -> String {
    if guide_core::gui::needs_quoting(path) {
        guide_core::gui::quote(path)
    } else {
        path.to_string()
    }
}

async fn change_dir(State(app): App, Path(id): Path<String>, Json(body): Json<CdBody>) -> Result<Json<CwdView>, ApiError> {
    let h = app.session(&id)?;
    let mut s = h.inner.lock().await;
    s.cwd = app.sandbox.resolve_dir(&s.cwd, &body.path)?;
    h.record(&mut s, TranscriptEntry::Command { text: format!("cd {}", cd_word(&body.path)), auto: true });
    Ok(Json(moved(&app, &h, &mut s)))
}

fn moved(app: &AppState, h: &SessionHandle, s: &mut Session) -> CwdView {
    s.revision += 1;
    let cwd = app.sandbox.display(&s.cwd);
    h.emit(Event::Cwd { revision: s.revision, cwd: cwd.clone() });
    CwdView { revision: s.revision, cwd }
}

#[derive(Debug, Deserialize)]
struct TextBody {
    text: String,
}

async fn set_text(State(app): App, Path(id): Path<String>, Json(body): Json<TextBody>) -> Result<Json<SyncView>, ApiError> {
    let h = app.session(&id)?;
    let mut s = h.inner.lock().await;
    let error = s.set_text(&app.registry, body.text);
    Ok(Json(synced(&app, &h, &mut s, error)))
}

async fn gui_action(State(app): App, Path(id): Path<String>, Json(action): Json<GuiAction>) -> Result<Json<SyncView>, ApiError> {
    let h = app.session(&id)?;
    let mut s = h.inner.lock().await;
    let error = s.apply(&app.registry, action)?;
    Ok(Json(synced(&app, &h, &mut s, error)))
}

/// Bumps the revision, schedules an explanation and tells the stream.
fn synced(app: &Arc<AppState>, h: &Arc<SessionHandle>, s: &mut Session, error: Option<crate::SyncError>) -> SyncView {
    s.revision += 1;
    let request = schedule_explanation(app, h, s);
    let view = s.view(error, request);
    h.emit(Event::Sync(view.clone()));
    view
}

fn schedule_explanation(app: &Arc<AppState>, h: &Arc<SessionHandle>, s: &mut Session) -> Option<u64> {
    if app.llm.is_none() || s.text.trim().is_empty() {
        return None;
    }
    s.explain_seq += 1;
    let seq = s.explain_seq;
    let (app, h) = (app.clone(), h.clone());
    tokio::spawn(async move {
        tokio::time::sleep(app.explain_debounce).await;
        let text = {
            let s = h.inner.lock().await;
            if s.explain_seq != seq {
                return;
            }
            s.text.clone()
        };
        let result = ask(&app, Stage::Explain, explain_prompt(&app.prompts, &text)).await;
        if h.inner.lock().await.explain_seq != seq {
            return;
        }
        let (summary, error) = match result {
            Ok(r) => (Some(r.trim().to_string()), None),
            Err(e) => (None, Some(e.to_string())),
        };
        h.emit(Event::Explanation { request: seq, text, summary, error });
    });
    Some(seq)
}

/// Asks the model, reusing earlier answers to the same prompt.
async fn ask(app: &Arc<AppState>, stage: Stage, prompt: Prompt) -> Result<String, ApiError> {
    let llm = app.llm.clone().ok_or_else(|| ApiError::LlmUnavailable("no API key and no recorded responses".into()))?;
    let key = cassette_key(&prompt, llm.params());
    if let Some(hit) = app.ai_cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
        return Ok(hit.clone());
    }
    let reply = tokio::task::spawn_blocking(move || llm.complete(stage, &prompt))
        .await
        .map_err(|e| ApiError::LlmFailed(e.to_string()))?
        .map_err(|e| match e {
            LlmError::Unavailable(m) => ApiError::LlmUnavailable(m),
            e @ LlmError::CassetteMiss { .. } => ApiError::LlmUnavailable(e.to_string()),
            e => ApiError::LlmFailed(e.to_string()),
        })?;
    app.ai_cache.lock().unwrap_or_else(|e| e.into_inner()).insert(key, reply.clone());
    Ok(reply)
}

#[derive(Debug, Deserialize)]
struct GenerateBody {
    prompt: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Generated {
    pub generated: String,
    pub sync: SyncView,
}

async fn ai_generate(State(app): App, Path(id): Path<String>, Json(body): Json<GenerateBody>) -> Result<Json<Generated>, ApiError> {
    let h = app.session(&id)?;
    let reply = ask(&app, Stage::Generate, generate_prompt(&app.prompts, &body.prompt)).await?;
    let generated = command_from_reply(&reply);
    let mut s = h.inner.lock().await;
    let error = s.set_text(&app.registry, generated.clone());
    let sync = synced(&app, &h, &mut s, error);
    Ok(Json(Generated { generated, sync }))
}

#[derive(Debug, Default, Deserialize)]
struct MaybeText {
    text: Option<String>,
}

/// `text` of an optional JSON body.
fn body_text(body: &[u8]) -> Result<Option<String>, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(None);
    }
    serde_json::from_slice::<MaybeText>(body).map(|b| b.text).map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn ai_explain(State(app): App, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let h = app.session(&id)?;
    let text = match body_text(&body)? {
        Some(t) => t,
        None => h.inner.lock().await.text.clone(),
    };
    if text.trim().is_empty() {
        return Err(ApiError::EmptyCommand);
    }
    let summary = ask(&app, Stage::Explain, explain_prompt(&app.prompts, &text)).await?;
    Ok(Json(json!({ "text": text, "summary": summary.trim() })))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub revision: u64,
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub duration_ms: u64,
    pub cwd: String,
}

async fn execute(State(app): App, Path(id): Path<String>, body: Bytes) -> Result<Json<ExecutionResult>, ApiError> {
    let h = app.session(&id)?;
    let requested = body_text(&body)?;
    let (text, cwd) = {
        let mut s = h.inner.lock().await;
        let text = requested.unwrap_or_else(|| s.text.clone());
        if text.trim().is_empty() {
            return Err(ApiError::EmptyCommand);
        }
        app.policy.check(&text)?;
        if let Some(target) = cd_target(&text) {
            s.cwd = app.sandbox.resolve_dir(&s.cwd, &target)?;
            h.record(&mut s, TranscriptEntry::Command { text, auto: false });
            let view = moved(&app, &h, &mut s);
            return Ok(Json(ExecutionResult { revision: view.revision, exit_code: Some(0), stdout: String::new(), stderr: String::new(), duration_ms: 0, cwd: view.cwd }));
        }
        h.record(&mut s, TranscriptEntry::Command { text: text.clone(), auto: false });
        s.revision += 1;
        (text, s.cwd.clone())
    };
    tracing::info!(session = %id, command = %text, "execute");

    let (tx, mut rx) = mpsc::unbounded_channel();
    let run = exec::run(&text, &cwd, app.policy.timeout, tx);
    let collect = async {
        let (mut stdout, mut stderr) = (String::new(), String::new());
        while let Some((stream, line)) = rx.recv().await {
            let buf = if stream == Stream::Stdout { &mut stdout } else { &mut stderr };
            buf.push_str(&line);
            buf.push('\n');
            let mut s = h.inner.lock().await;
            h.record(&mut s, TranscriptEntry::Output { stream, text: line });
        }
        (stdout, stderr)
    };
    let (finished, (stdout, stderr)) = tokio::join!(run, collect);

    let mut s = h.inner.lock().await;
    s.revision += 1;
    match finished {
        Ok(done) => {
            h.record(&mut s, TranscriptEntry::Exit { code: done.code, duration_ms: done.duration_ms });
            h.emit(Event::Exit { revision: s.revision, code: done.code, duration_ms: done.duration_ms });
            Ok(Json(ExecutionResult {
                revision: s.revision,
                exit_code: done.code,
                stdout,
                stderr,
                duration_ms: done.duration_ms,
                cwd: app.sandbox.display(&s.cwd),
            }))
        }
        Err(e) => {
            h.record(&mut s, TranscriptEntry::Error { message: e.to_string() });
            Err(e)
        }
    }
}

async fn stream(ws: WebSocketUpgrade, State(app): App, Path(id): Path<String>) -> Result<Response, ApiError> {
    let h = app.session(&id)?;
    Ok(ws.on_upgrade(move |socket| forward_events(socket, h)))
}

async fn forward_events(mut socket: WebSocket, h: Arc<SessionHandle>) {
    let mut rx = h.events.subscribe();
    let hello = Event::Sync(h.inner.lock().await.view(None, None));
    let send = |ev: &Event| Message::Text(serde_json::to_string(ev).unwrap_or_default().into());
    if socket.send(send(&hello)).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            ev = rx.recv() => match ev {
                Ok(ev) => {
                    if socket.send(send(&ev)).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => tracing::warn!(skipped = n, "stream lagged"),
                Err(broadcast::error::RecvError::Closed) => break,
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                _ => {}
            },
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SpecView {
    pub command: String,
    pub source: String,
    pub spec: GuiSpec,
}

async fn get_spec(State(app): App, Path(command): Path<String>) -> Result<Json<SpecView>, ApiError> {
    let loaded = app.registry.get(&command)?;
    match &loaded.spec {
        Ok(spec) => Ok(Json(SpecView { command, source: loaded.source.clone(), spec: spec.clone() })),
        Err(FlattenError::AlternativeExplosion { count, cap }) => Err(ApiError::AlternativeExplosion { count: *count, cap: *cap }),
    }
}

#[derive(Debug, Deserialize)]
struct SearchQuery {
    q: String,
}

async fn search_spec(State(app): App, Path(command): Path<String>, Query(q): Query<SearchQuery>) -> Result<Json<Vec<String>>, ApiError> {
    let loaded = app.registry.get(&command)?;
    match &loaded.spec {
        Ok(spec) => Ok(Json(search_flags(spec, &q.q))),
        Err(FlattenError::AlternativeExplosion { count, cap }) => Err(ApiError::AlternativeExplosion { count: *count, cap: *cap }),
    }
}
