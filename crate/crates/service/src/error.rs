use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use crate::registry::RegistryError;

/// Every error leaves the service as `{"error": code, "detail": text}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub detail: String,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    detail: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status,
            code,
            detail: detail.into(),
        }
    }

    pub fn validation(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code,
            detail: &self.detail,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<essaycbm::Error> for ApiError {
    fn from(e: essaycbm::Error) -> Self {
        use essaycbm::Error as E;
        let detail = e.to_string();
        match e {
            E::EmptyEssay => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_essay", detail),
            E::Validation(_) | E::DegenerateInput(_) => Self::validation(detail),
            E::Load { .. } | E::Io { .. } | E::Json(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_dataset", detail)
            }
            E::KindMismatch { .. } => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "kind_mismatch", detail),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", detail),
        }
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::Unknown(id) => Self::new(
                StatusCode::NOT_FOUND,
                "unknown_model",
                format!("no model registered as {id:?}"),
            ),
            RegistryError::Failed { model_id, reason } => Self::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "model_unavailable",
                format!("model {model_id:?} failed to load: {reason}"),
            ),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        match r {
            JsonRejection::JsonDataError(e) => Self::validation(e.body_text()),
            other => Self::new(StatusCode::BAD_REQUEST, "bad_request", other.body_text()),
        }
    }
}
