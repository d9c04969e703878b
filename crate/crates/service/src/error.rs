use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use cgpa_core::predictors::ModelError;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("validation failed")]
    ValidationFailed(Vec<String>),
    #[error("email already registered")]
    DuplicateEmail,
    #[error("bad credentials")]
    BadCredentials,
    #[error("token expired")]
    TokenExpired,
    #[error("token invalid")]
    TokenInvalid,
    #[error("admin role required")]
    Forbidden,
    #[error("{0} not found")]
    NotFound(String),
    #[error("rating must be an integer from 1 to 5")]
    BadRating,
    #[error("no active model")]
    ModelUnavailable,
    #[error("insufficient data: {have} labelled rows, need {need}")]
    InsufficientData { have: usize, need: usize },
    #[error("artifact corrupt: {0}")]
    ArtifactCorrupt(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("store: {0}")]
    Store(String),
    #[error("model: {0}")]
    Model(String),
}

impl From<rusqlite::Error> for ServiceError {
    fn from(e: rusqlite::Error) -> Self {
        ServiceError::Store(e.to_string())
    }
}

impl From<ModelError> for ServiceError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::ValidationFailed(f) => ServiceError::ValidationFailed(f),
            other => ServiceError::Model(other.to_string()),
        }
    }
}

/// JSON error body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<Vec<String>>,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::ValidationFailed(_) => "ValidationFailed",
            ServiceError::DuplicateEmail => "DuplicateEmail",
            ServiceError::BadCredentials => "BadCredentials",
            ServiceError::TokenExpired => "TokenExpired",
            ServiceError::TokenInvalid => "TokenInvalid",
            ServiceError::Forbidden => "Forbidden",
            ServiceError::NotFound(_) => "NotFound",
            ServiceError::BadRating => "BadRating",
            ServiceError::ModelUnavailable => "ModelUnavailable",
            ServiceError::InsufficientData { .. } => "InsufficientData",
            ServiceError::ArtifactCorrupt(_) => "ArtifactCorrupt",
            ServiceError::Config(_) | ServiceError::Store(_) | ServiceError::Model(_) => "Internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::ValidationFailed(_) | ServiceError::BadRating => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::DuplicateEmail | ServiceError::InsufficientData { .. } => StatusCode::CONFLICT,
            ServiceError::BadCredentials | ServiceError::TokenExpired | ServiceError::TokenInvalid => {
                StatusCode::UNAUTHORIZED
            }
            ServiceError::Forbidden => StatusCode::FORBIDDEN,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::ModelUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code().into(),
            message: self.to_string(),
            fields: match self {
                ServiceError::ValidationFailed(f) => Some(f.clone()),
                _ => None,
            },
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (self.status(), Json(self.body())).into_response()
    }
}
