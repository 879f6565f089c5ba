use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::Serialize;

use prokno_core::food::FoodError;
use prokno_core::kg::KgError;
use prokno_core::metrics::MetricError;
use prokno_core::pk::PkError;
use prokno_core::qgen::QgenError;
use prokno_core::triage::TriageError;

/// Machine-readable error body shared by the HTTP API and the CLI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorBody {
    pub error_code: String,
    pub message: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>, path: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error_code: code.to_string(),
                message: message.into(),
                path: path.into(),
            },
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message, "")
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} {id:?}"), what)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.body.error_code, self.body.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = prokno_core::to_canonical_json(&self.body).expect("error body serializes");
        (self.status, [("content-type", "application/json")], body).into_response()
    }
}

impl From<TriageError> for ApiError {
    fn from(e: TriageError) -> Self {
        match &e {
            TriageError::Domain { node, .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "domain_error", e.to_string(), format!("nodes[{node}]"))
            }
            TriageError::SessionDone => ApiError::new(StatusCode::CONFLICT, "session_done", e.to_string(), ""),
            _ => ApiError::bad_request("invalid_document", e.to_string()),
        }
    }
}

impl From<PkError> for ApiError {
    fn from(e: PkError) -> Self {
        match &e {
            PkError::Parse(_) => ApiError::bad_request("parse_error", e.to_string()),
            PkError::Schema(_) => ApiError::bad_request("schema_error", e.to_string()),
            PkError::Validation(report) => {
                let path = report.violations.first().map(|v| v.path.clone()).unwrap_or_default();
                ApiError::new(StatusCode::BAD_REQUEST, "validation_error", e.to_string(), path)
            }
        }
    }
}

impl From<MetricError> for ApiError {
    fn from(e: MetricError) -> Self {
        let code = match e {
            MetricError::EmptyLog => "empty_log",
            MetricError::EmptySampleSet => "empty_sample_set",
            MetricError::MixedAnnotatorCounts(..) => "mixed_annotator_counts",
            _ => "invalid_input",
        };
        ApiError::bad_request(code, e.to_string())
    }
}

impl From<FoodError> for ApiError {
    fn from(e: FoodError) -> Self {
        let code = match e {
            FoodError::UnknownCondition(_) => "unknown_condition",
            FoodError::Unit(_) => "unit_error",
            FoodError::EmptyCatalog => "empty_catalog",
            _ => "invalid_input",
        };
        ApiError::bad_request(code, e.to_string())
    }
}

impl From<KgError> for ApiError {
    fn from(e: KgError) -> Self {
        let code = match e {
            KgError::NoAnchorsFound => "no_anchors_found",
            KgError::EmptyPhrase => "empty_phrase",
            _ => "invalid_graph",
        };
        ApiError::bad_request(code, e.to_string())
    }
}

impl From<QgenError> for ApiError {
    fn from(e: QgenError) -> Self {
        ApiError::bad_request("invalid_input", e.to_string())
    }
}
