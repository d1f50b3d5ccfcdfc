use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use crate::API_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub field_paths: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slot: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allowed_range: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retry_after_seconds: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: Box<ErrorBody>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: Box::new(ErrorBody {
                code,
                message: message.into(),
                field_paths: Vec::new(),
                slot: None,
                allowed_range: None,
                retry_after_seconds: None,
            }),
        }
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no {what} with id {id:?}"))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn validation(message: impl Into<String>, fields: Vec<String>) -> Self {
        let mut e = Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation_error", message);
        e.body.field_paths = fields;
        e
    }

    pub fn capacity(limit: usize, retry_after: u64) -> Self {
        let mut e = Self::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "capacity_exceeded",
            format!("session limit of {limit} reached; delete a session or retry later"),
        );
        e.body.retry_after_seconds = Some(retry_after);
        e
    }
}

impl From<amrsim::Error> for ApiError {
    fn from(err: amrsim::Error) -> Self {
        use amrsim::Error as E;
        let message = err.to_string();
        match err {
            E::Validation { key, .. } => ApiError::validation(message, vec![key]),
            E::UnknownPath { path, .. } | E::Coercion { path, .. } => ApiError::validation(message, vec![path]),
            E::MissingFile { .. } | E::Parse { .. } | E::AlreadyExists { .. } => {
                ApiError::validation(message, vec!["config_path".into()])
            }
            E::Directive(_) => ApiError::validation(message, vec!["overrides".into()]),
            E::InvalidAction { slot, max, .. } => {
                let mut e = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_action", message);
                e.body.field_paths = vec![format!("actions.{slot}")];
                e.body.slot = Some(slot);
                e.body.allowed_range = Some([0, max]);
                e
            }
            E::Dimension { .. } => {
                let mut e = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_action", message);
                e.body.field_paths = vec!["actions".into()];
                e
            }
            E::EpisodeFinished => ApiError::new(StatusCode::CONFLICT, "conflict", message),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    api_version: &'static str,
    error: &'a ErrorBody,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut resp = (
            self.status,
            Json(Envelope {
                api_version: API_VERSION,
                error: self.body.as_ref(),
            }),
        )
            .into_response();
        if let Some(s) = self.body.retry_after_seconds {
            resp.headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from_str(&s.to_string()).expect("digits"));
        }
        resp
    }
}
