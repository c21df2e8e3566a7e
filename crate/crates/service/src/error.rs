use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

pub type ServiceResult<T> = Result<T, ServiceError>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown group `{0}`")]
    UnknownGroup(String),

    #[error("unknown session `{0}`")]
    UnknownSession(String),

    #[error("expected an answer for `{expected}`, got `{got}`")]
    OutOfOrder { expected: String, got: String },

    #[error("session has no items left")]
    SessionFinished,

    #[error("session is not finished yet")]
    NotFinished,

    #[error("bad request: {0}")]
    BadRequest(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("could not write answer log: {0}")]
    Log(String),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            Self::UnknownGroup(_) | Self::UnknownSession(_) => StatusCode::NOT_FOUND,
            Self::OutOfOrder { .. } | Self::SessionFinished | Self::NotFinished => {
                StatusCode::CONFLICT
            }
            Self::BadRequest(_) => StatusCode::BAD_REQUEST,
            Self::Config(_) | Self::Log(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}
