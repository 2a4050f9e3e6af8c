use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use vector_core::analysis::AnalysisError;
use vector_core::bundle_adjust::BaError;
use vector_core::session::SessionError;

/// An error response: `{"error": {"code", "message"}}` with a status code.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_id", message)
    }

    pub fn busy() -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "job_running",
            "a bundle adjustment job is running; wait for it or cancel it first",
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<BaError> for ApiError {
    fn from(e: BaError) -> Self {
        match e {
            BaError::NumericalFailure(_)
            | BaError::SingularSystem
            | BaError::DegenerateConfiguration(_) => Self::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "numerical_failure",
                e.to_string(),
            ),
            BaError::Cancelled => Self::new(StatusCode::CONFLICT, "cancelled", e.to_string()),
            _ => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_problem",
                e.to_string(),
            ),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let semantic = StatusCode::UNPROCESSABLE_ENTITY;
        match e {
            SessionError::UnknownId(_) => Self::not_found(e.to_string()),
            SessionError::UnknownRun(_) => {
                Self::new(StatusCode::NOT_FOUND, "unknown_run", e.to_string())
            }
            SessionError::AlreadyDeleted(_) => {
                Self::new(semantic, "already_deleted", e.to_string())
            }
            SessionError::NotDeleted(_) => Self::new(semantic, "not_deleted", e.to_string()),
            SessionError::TooFewCamerasRemaining { .. } => {
                Self::new(semantic, "too_few_cameras_remaining", e.to_string())
            }
            SessionError::Ba(b) => b.into(),
            SessionError::Geometry(_) | SessionError::Dataset(_) => {
                Self::new(semantic, "invalid_dataset", e.to_string())
            }
            SessionError::CorruptSessionFile(_) | SessionError::Io(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string())
            }
        }
    }
}

impl From<AnalysisError> for ApiError {
    fn from(e: AnalysisError) -> Self {
        let code = match e {
            AnalysisError::MissingFinalState => "missing_final_state",
            AnalysisError::EmptyInput => "empty_input",
            AnalysisError::InvalidArgument(_) => "invalid_argument",
        };
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, e.to_string())
    }
}
