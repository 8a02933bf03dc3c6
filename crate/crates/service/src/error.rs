use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use scenescout_core::exploration::ExplorationError;
use scenescout_core::preview::PreviewError;
use scenescout_core::providers::ProviderError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
    #[serde(default)]
    pub retryable: bool,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                detail: Value::Null,
                retryable: false,
            },
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = detail;
        self
    }

    pub fn retryable(mut self, retryable: bool) -> Self {
        self.body.retryable = retryable;
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_argument", message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} {id}"))
            .with_detail(json!({ "id": id }))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn timeout(after_ms: u64) -> Self {
        Self::new(
            StatusCode::BAD_GATEWAY,
            "provider_timeout",
            format!("provider calls did not finish within {after_ms} ms"),
        )
        .with_detail(json!({ "timeout_ms": after_ms }))
        .retryable(true)
    }
}

impl From<ProviderError> for ApiError {
    fn from(e: ProviderError) -> Self {
        let code = match &e {
            ProviderError::InvalidArgument(_) => {
                return ApiError::bad_request(e.to_string());
            }
            ProviderError::RouteUnavailable(_) => "route_unavailable",
            ProviderError::NoCoverage { .. } => "no_coverage",
            ProviderError::RateLimited { .. } => "rate_limited",
            ProviderError::Timeout => "provider_timeout",
            _ => "provider_error",
        };
        let detail = match e.retry_after() {
            Some(d) => json!({ "retry_after_ms": d.as_millis() as u64 }),
            None => Value::Null,
        };
        ApiError::new(StatusCode::BAD_GATEWAY, code, e.to_string())
            .with_detail(detail)
            .retryable(e.is_retryable())
    }
}

impl From<ExplorationError> for ApiError {
    fn from(e: ExplorationError) -> Self {
        match e {
            ExplorationError::InvalidArgument(m) => ApiError::bad_request(m),
            ExplorationError::InvalidState { op, status } => ApiError::new(
                StatusCode::CONFLICT,
                "invalid_state",
                format!("{op} is not allowed while {status}"),
            )
            .with_detail(json!({ "op": op, "status": status })),
            // the start coordinate is the caller's input
            ExplorationError::NoCoverage(p) => {
                ApiError::new(StatusCode::BAD_REQUEST, "no_coverage", p.to_string())
            }
            ExplorationError::Provider(p) => p.into(),
            e @ (ExplorationError::Prompt(_) | ExplorationError::Replay(_)) => {
                ApiError::internal(e.to_string())
            }
        }
    }
}

impl From<PreviewError> for ApiError {
    fn from(e: PreviewError) -> Self {
        match e {
            PreviewError::InvalidArgument(m) => ApiError::bad_request(m),
            PreviewError::Resolve { endpoint, source } if !source.is_retryable() => {
                ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "unresolved_endpoint",
                    format!("could not resolve {endpoint:?}: {source}"),
                )
                .with_detail(json!({ "endpoint": endpoint }))
            }
            PreviewError::Resolve { source, .. } | PreviewError::Route(source) => source.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
