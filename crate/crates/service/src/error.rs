use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use guides_core::access::DenyReason;
use guides_core::model::ModelError;
use guides_core::ontology::OntologyError;
use guides_core::repair::RepairError;
use serde_json::{json, Map, Value};

/// JSON error body: `{"error": code, "message": ..., ...detail}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Map<String, Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.detail.insert(key.to_string(), value.into());
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn denied(reason: DenyReason, message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "denied", message).with("reason", reason.as_str())
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = self.detail;
        body.insert("error".into(), json!(self.code));
        body.insert("message".into(), json!(self.message));
        (self.status, Json(Value::Object(body))).into_response()
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        match &e {
            ModelError::EditRejected { index, .. } => {
                let index = *index;
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "edit_rejected", e.to_string()).with("index", index)
            }
            ModelError::NotFound { .. } => ApiError::not_found(e.to_string()),
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", e.to_string()),
        }
    }
}

impl From<OntologyError> for ApiError {
    fn from(e: OntologyError) -> Self {
        match e {
            OntologyError::NotFound(_) => ApiError::not_found(e.to_string()),
            OntologyError::InvalidArgument(_) | OntologyError::Geometry(_) => ApiError::bad_request(e.to_string()),
            OntologyError::TypeError { .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", e.to_string())
            }
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<RepairError> for ApiError {
    fn from(e: RepairError) -> Self {
        match e {
            RepairError::UnknownFlag(_) | RepairError::UnknownSuggestion(_) => ApiError::not_found(e.to_string()),
            RepairError::Conflict(_) => ApiError::new(StatusCode::CONFLICT, "conflict", e.to_string()),
            RepairError::Unauthorized { reason, .. } => ApiError::denied(reason, e.to_string()),
            RepairError::Model(m) => m.into(),
            other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", other.to_string()),
        }
    }
}
