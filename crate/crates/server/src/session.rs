use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use guide_core::dsl::load;
use guide_core::grammar::Guideline;
use guide_core::gui::{
    extract_state, flatten, select_alternative, serialize_state, set_slot, toggle_flag, ExtractError, FlattenError, GuiSpec, GuiState,
    SlotValue, StateError, DEFAULT_ALT_CAP,
};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::exec::Stream;

/// A guideline file and its GUI spec.
#[derive(Debug)]
pub struct Loaded {
    pub source: String,
    pub guideline: Guideline,
    pub spec: Result<GuiSpec, FlattenError>,
}

/// Guidelines looked up by command word in a directory of `<name>.guide`
/// files. Each file is read once.
#[derive(Debug)]
pub struct Registry {
    dir: PathBuf,
    cache: Mutex<HashMap<String, Option<Result<Arc<Loaded>, String>>>>,
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphanumeric()) && chars.all(|c| c.is_ascii_alphanumeric() || "._+-".contains(c))
}

impl Registry {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Registry { dir: dir.into(), cache: Mutex::new(HashMap::new()) }
    }

    /// `None` when there is no guideline for `name`, `Some(Err)` when its file
    /// does not load.
    pub fn lookup(&self, name: &str) -> Option<Result<Arc<Loaded>, String>> {
        if !valid_name(name) {
            return None;
        }
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        cache
            .entry(name.to_string())
            .or_insert_with(|| {
                let source = fs::read_to_string(self.dir.join(format!("{name}.guide"))).ok()?;
                Some(match load(&source) {
                    Ok(guideline) => {
                        let spec = flatten(&guideline, DEFAULT_ALT_CAP);
                        Ok(Arc::new(Loaded { source, guideline, spec }))
                    }
                    Err(e) => {
                        tracing::warn!(command = name, error = %e, "guideline does not load");
                        Err(e.to_string())
                    }
                })
            })
            .clone()
    }

    pub fn get(&self, name: &str) -> Result<Arc<Loaded>, ApiError> {
        match self.lookup(name) {
            None => Err(ApiError::UnknownCommand(name.to_string())),
            Some(Err(message)) => Err(ApiError::InvalidGuideline { command: name.to_string(), message }),
            Some(Ok(l)) => Ok(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TranscriptEntry {
    /// A command line. `auto` marks a `cd` issued by file navigation.
    Command { text: String, auto: bool },
    Output { stream: Stream, text: String },
    Exit { code: Option<i32>, duration_ms: u64 },
    Error { message: String },
}

/// Why the text and the GUI disagree after a sync.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SyncError {
    /// `message` carries a caret under `position` (a byte offset).
    ParseFailure { position: usize, expected: Vec<String>, message: String },
    DuplicateFlag { flag: String },
    NoAlternative,
    AlternativeExplosion { count: u64, cap: u64 },
    InvalidGuideline { message: String },
    MissingRequiredSlot { slot: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncView {
    pub revision: u64,
    pub text: String,
    /// Command word with a loaded guideline.
    pub command: Option<String>,
    pub state: Option<GuiState>,
    pub error: Option<SyncError>,
    /// Id of the explanation that will be pushed on the stream for this text.
    pub explain_request: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum GuiAction {
    Toggle { flag: String },
    SetSlot { slot: String, value: SlotValue },
    SelectAlt { alternative: usize },
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub cwd: PathBuf,
    pub text: String,
    pub command: Option<String>,
    pub state: Option<GuiState>,
    pub revision: u64,
    pub transcript: Vec<TranscriptEntry>,
    pub explain_seq: u64,
}

impl Session {
    pub fn new(id: String, cwd: PathBuf) -> Self {
        Session { id, cwd, text: String::new(), command: None, state: None, revision: 0, transcript: Vec::new(), explain_seq: 0 }
    }

    pub fn view(&self, error: Option<SyncError>, explain_request: Option<u64>) -> SyncView {
        SyncView {
            revision: self.revision,
            text: self.text.clone(),
            command: self.command.clone(),
            state: self.state.clone(),
            error,
            explain_request,
        }
    }

    /// Replaces the text and parses it with the guideline of its first word.
    /// When parsing fails the previous state of the same command is kept.
    pub fn set_text(&mut self, reg: &Registry, text: String) -> Option<SyncError> {
        self.text = text;
        let word = self.text.split_whitespace().next().map(str::to_string);
        let loaded = match word.as_deref().and_then(|w| reg.lookup(w)) {
            None => {
                self.command = None;
                self.state = None;
                return None;
            }
            Some(Err(message)) => {
                self.command = None;
                self.state = None;
                return Some(SyncError::InvalidGuideline { message });
            }
            Some(Ok(l)) => l,
        };
        if self.command != word {
            self.state = None;
        }
        self.command = word;
        let spec = match &loaded.spec {
            Ok(spec) => spec,
            Err(FlattenError::AlternativeExplosion { count, cap }) => {
                self.state = None;
                return Some(SyncError::AlternativeExplosion { count: *count, cap: *cap });
            }
        };
        match extract_state(spec, &loaded.guideline, &self.text) {
            Ok(st) => {
                self.state = Some(st);
                None
            }
            Err(ExtractError::Parse(f)) => {
                Some(SyncError::ParseFailure { position: f.position, message: f.render(&self.text), expected: f.expected })
            }
            Err(ExtractError::DuplicateFlag(flag)) => Some(SyncError::DuplicateFlag { flag }),
            Err(ExtractError::NoAlternative) => Some(SyncError::NoAlternative),
        }
    }

    /// Applies a GUI transition and re-renders the text. A state that still
    /// lacks a required value is kept while the text stays as it was.
    pub fn apply(&mut self, reg: &Registry, action: GuiAction) -> Result<Option<SyncError>, ApiError> {
        let command = self.command.clone().ok_or(ApiError::NoGuideline)?;
        let loaded = reg.get(&command)?;
        let spec = loaded.spec.as_ref().map_err(|FlattenError::AlternativeExplosion { count, cap }| ApiError::AlternativeExplosion {
            count: *count,
            cap: *cap,
        })?;
        let cur = self.state.clone().unwrap_or_default();
        let next = match action {
            GuiAction::Toggle { flag } => toggle_flag(spec, &cur, &flag),
            GuiAction::SetSlot { slot, value } => set_slot(spec, &cur, &slot, value),
            GuiAction::SelectAlt { alternative } => select_alternative(spec, &cur, alternative),
        }
        .map_err(ApiError::State)?;
        match serialize_state(spec, &next) {
            Ok(text) => {
                self.text = text;
                self.state = Some(next);
                Ok(None)
            }
            Err(StateError::MissingRequiredSlot(slot)) => {
                self.state = Some(next);
                Ok(Some(SyncError::MissingRequiredSlot { slot }))
            }
            Err(e) => Err(ApiError::State(e)),
        }
    }
}
