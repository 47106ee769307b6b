use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use guide_core::gui::StateError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("no session `{0}`")]
    SessionNotFound(String),
    #[error("`{0}` is outside the sandbox")]
    PathEscapesSandbox(String),
    #[error("`{0}` is not a directory")]
    NotADirectory(String),
    #[error("`{0}` does not exist")]
    NotFound(String),
    #[error("no guideline for `{0}`")]
    UnknownCommand(String),
    #[error("the guideline for `{command}` does not load: {message}")]
    InvalidGuideline { command: String, message: String },
    #[error("the guideline expands to {count} command forms, more than the limit of {cap}")]
    AlternativeExplosion { count: u64, cap: u64 },
    #[error("the current text has no guideline to act on")]
    NoGuideline,
    #[error(transparent)]
    State(StateError),
    #[error("command denied by policy: {0}")]
    CommandDenied(String),
    #[error("nothing to run")]
    EmptyCommand,
    #[error("could not start the command: {0}")]
    SpawnFailure(String),
    #[error("the command did not finish within {after_ms} ms")]
    Timeout { after_ms: u64 },
    #[error("AI assistance is unavailable: {0}")]
    LlmUnavailable(String),
    #[error("AI request failed: {0}")]
    LlmFailed(String),
    #[error("{0}")]
    BadRequest(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::SessionNotFound(_) => "SessionNotFound",
            ApiError::PathEscapesSandbox(_) => "PathEscapesSandbox",
            ApiError::NotADirectory(_) => "NotADirectory",
            ApiError::NotFound(_) => "NotFound",
            ApiError::UnknownCommand(_) => "UnknownCommand",
            ApiError::InvalidGuideline { .. } => "InvalidGuideline",
            ApiError::AlternativeExplosion { .. } => "AlternativeExplosion",
            ApiError::NoGuideline => "NoGuideline",
            ApiError::State(StateError::MissingRequiredSlot(_)) => "MissingRequiredSlot",
            ApiError::State(StateError::UnknownId(_)) => "UnknownId",
            ApiError::State(StateError::NotInAlternative(_)) => "NotInAlternative",
            ApiError::CommandDenied(_) => "CommandDenied",
            ApiError::EmptyCommand => "EmptyCommand",
            ApiError::SpawnFailure(_) => "SpawnFailure",
            ApiError::Timeout { .. } => "Timeout",
            ApiError::LlmUnavailable(_) => "LlmUnavailable",
            ApiError::LlmFailed(_) => "LlmFailed",
            ApiError::BadRequest(_) => "BadRequest",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::SessionNotFound(_) | ApiError::NotFound(_) | ApiError::UnknownCommand(_) => StatusCode::NOT_FOUND,
            ApiError::PathEscapesSandbox(_) | ApiError::CommandDenied(_) => StatusCode::FORBIDDEN,
            ApiError::NotADirectory(_) | ApiError::State(_) | ApiError::EmptyCommand | ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NoGuideline => StatusCode::CONFLICT,
            ApiError::InvalidGuideline { .. } | ApiError::AlternativeExplosion { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::SpawnFailure(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::Timeout { .. } => StatusCode::GATEWAY_TIMEOUT,
            ApiError::LlmUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::LlmFailed(_) => StatusCode::BAD_GATEWAY,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.code(), "message": self.to_string() }))).into_response()
    }
}
