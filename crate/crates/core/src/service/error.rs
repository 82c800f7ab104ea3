use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Value};

use crate::fer::{FerError, GalleryError};
use crate::sessions::SessionError;
use crate::stats::StatsError;

/// An HTTP error with a machine-readable code.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub extra: Option<(String, Value)>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.to_string(),
            message: message.into(),
            extra: None,
        }
    }

    pub fn with(mut self, key: &str, value: Value) -> Self {
        self.extra = Some((key.to_string(), value));
        self
    }

    pub fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} not found"))
    }

    pub fn unprocessable(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": { "code": self.code, "message": self.message } });
        if let Some((k, v)) = self.extra {
            body[k] = v;
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::InvalidConfig { .. } => StatusCode::BAD_REQUEST,
            SessionError::Phase { .. }
            | SessionError::WrongKind { .. }
            | SessionError::Closed(_)
            | SessionError::Duplicate(_) => StatusCode::CONFLICT,
            SessionError::InvalidPayload(_) | SessionError::Stats(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Gap { .. } | SessionError::UnknownKind { .. } | SessionError::Integrity { .. } => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        let mut err = ApiError::new(status, e.code(), e.to_string());
        if let SessionError::InvalidConfig { field, .. } = &e {
            err = err.with("field", json!(field));
        }
        if let SessionError::Phase { phase, .. } = &e {
            err = err.with("phase", json!(phase));
        }
        err
    }
}

impl From<StatsError> for ApiError {
    fn from(e: StatsError) -> Self {
        ApiError::unprocessable(e.code(), e.to_string())
    }
}

impl From<FerError> for ApiError {
    fn from(e: FerError) -> Self {
        match e {
            FerError::Landmark { .. } | FerError::EmptySamples => ApiError::unprocessable("invalid_landmarks", e.to_string()),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<GalleryError> for ApiError {
    fn from(e: GalleryError) -> Self {
        match e {
            GalleryError::Io(m) => ApiError::internal(m),
            GalleryError::UnknownPerson(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_person", e.to_string()),
            other => ApiError::unprocessable("invalid_embedding", other.to_string()),
        }
    }
}
