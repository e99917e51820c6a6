use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use spkg_api::{codes, ErrorBody};
use spkg_core::Error as CoreError;

/// An error rendered as `{"error": {"code", "message", "field?"}}`.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub field: Option<String>,
}

impl ApiError {
    pub fn not_found(id: &str) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            code: codes::NOT_FOUND,
            message: format!("no session {id}"),
            field: None,
        }
    }

    pub fn conflict(expected: u64, current: u64) -> Self {
        Self {
            status: StatusCode::CONFLICT,
            code: codes::VERSION_CONFLICT,
            message: format!("expected version {expected}, session is at {current}"),
            field: Some("expected_version".into()),
        }
    }

    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: codes::INVALID,
            message: message.into(),
            field: Some(field.into()),
        }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: codes::MALFORMED,
            message: message.into(),
            field: None,
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: codes::INTERNAL,
            message: message.into(),
            field: None,
        }
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::VersionConflict { expected, current } => Self::conflict(expected, current),
            CoreError::Invalid { field, message } => Self::invalid(field, message),
            CoreError::InvalidProbe { .. } => Self::invalid("probe", e.to_string()),
            CoreError::DimensionMismatch { context, .. } => Self::invalid(context, e.to_string()),
            CoreError::Parse(_) | CoreError::Json(_) | CoreError::Csv(_) => Self::malformed(e.to_string()),
            _ => Self::internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody::new(self.code, self.message, self.field);
        (self.status, Json(body)).into_response()
    }
}
