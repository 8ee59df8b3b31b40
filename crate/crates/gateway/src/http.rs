//! JSON-over-HTTP API.
//!
//! | Method | Path | |
//! |---|---|---|
//! | POST | `/v1/samples` | ingest a window (201 new, 200 already stored) |
//! | GET | `/v1/subjects/{id}/ema/pending` | open queries for a subject |
//! | POST | `/v1/ema/{ema_id}/response` | answer a query |
//! | GET | `/v1/analytics/{report}` | `coverage`, `temporal`, `quality` or `response` |
//! | GET | `/v1/health` | liveness and counts |
//!
//! Errors are `{"error": "...", "fields": [{"field", "message"}]}` with 400
//! for unparsable JSON, 422 for schema or validation failures, 404 for
//! unknown queries, subjects or reports.

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ppgema_core::analytics::{AnalyticsError, GroupBy, DEFAULT_HORIZON_MIN, DEFAULT_MIN_COUNT};
use ppgema_core::model::{EmaQuery, FieldError, ResponseSubmission, SamplePayload};
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};

use crate::reports::{self, ReportError, ReportKind};
use crate::service::{wall_clock_ms, Service, ServiceError};

/// Large enough for several minutes of 20 Hz data with all channels.
pub const MAX_BODY_BYTES: usize = 32 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.into(),
                fields: Vec::new(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Invalid(fields) => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: ErrorBody {
                    error: "invalid request".into(),
                    fields,
                },
            },
            ServiceError::UnknownQuery(_) => Self::new(StatusCode::NOT_FOUND, e.to_string()),
            ServiceError::Unavailable(_) | ServiceError::ReadOnly => {
                Self::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string())
            }
            ServiceError::Store(_) | ServiceError::Recovery(_) => {
                tracing::error!(error = %e, "request failed");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
            }
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        let status = match &r {
            JsonRejection::JsonDataError(_) => StatusCode::UNPROCESSABLE_ENTITY,
            JsonRejection::MissingJsonContentType(_) => StatusCode::UNSUPPORTED_MEDIA_TYPE,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, r.body_text())
    }
}

impl From<ReportError> for ApiError {
    fn from(e: ReportError) -> Self {
        let status = match &e {
            ReportError::UnknownKind(_) | ReportError::Analytics(AnalyticsError::NoSamples | AnalyticsError::NoLabels) => {
                StatusCode::NOT_FOUND
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        ReportError::from(e).into()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

pub fn router(service: Arc<Service>) -> Router {
    // The EMA client is a browser page that may be served from elsewhere;
    // there is no authentication to protect.
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/v1/samples", post(post_sample))
        .route("/v1/subjects/{id}/ema/pending", get(get_pending))
        .route("/v1/ema/{ema_id}/response", post(post_response))
        .route("/v1/analytics/{report}", get(get_analytics))
        .route("/v1/health", get(get_health))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .layer(cors)
        .with_state(service)
}

/// Serves until `shutdown` resolves, then checkpoints every subject.
pub async fn serve(
    service: Arc<Service>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(service.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    let s = service.clone();
    let n = tokio::task::spawn_blocking(move || s.checkpoint_all())
        .await
        .map_err(std::io::Error::other)?
        .map_err(std::io::Error::other)?;
    tracing::info!(subjects = n, "checkpoints written");
    Ok(())
}

async fn post_sample(
    State(service): State<Arc<Service>>,
    body: Result<Json<SamplePayload>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(payload) = body?;
    let outcome = blocking(move || service.ingest(payload, wall_clock_ms())).await??;
    let status = if outcome.duplicate {
        StatusCode::OK
    } else {
        StatusCode::CREATED
    };
    Ok((status, Json(outcome)).into_response())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQueries {
    pub subject_id: String,
    /// Server time used for the expiry check; clients count down from it.
    pub now_ms: i64,
    pub queries: Vec<EmaQuery>,
}

async fn get_pending(State(service): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<PendingQueries>> {
    let now_ms = service.now_ms(&id);
    let queries = service.pending_queries(&id, now_ms)?;
    Ok(Json(PendingQueries {
        subject_id: id,
        now_ms,
        queries,
    }))
}

async fn post_response(
    State(service): State<Arc<Service>>,
    Path(ema_id): Path<String>,
    body: Result<Json<ResponseSubmission>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(submission) = body?;
    let now_ms = service.now_for_query(&ema_id);
    let ack = service.submit_response(&ema_id, submission, now_ms)?;
    Ok(Json(ack).into_response())
}

#[derive(Debug, Clone, Deserialize)]
pub struct AnalyticsParams {
    pub subject: Option<String>,
    pub d: Option<f64>,
    pub group_by: Option<GroupBy>,
    pub horizon_min: Option<u32>,
    pub min_count: Option<usize>,
}

async fn get_analytics(
    State(service): State<Arc<Service>>,
    Path(report): Path<String>,
    Query(params): Query<AnalyticsParams>,
) -> ApiResult<Response> {
    let kind: ReportKind = report.parse()?;
    if let Some(s) = &params.subject {
        if service.snapshot(s).is_none() {
            return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown subject {s}")));
        }
    }
    let d = params.d.unwrap_or(service.config().d);
    blocking(move || -> ApiResult<Response> {
        let snaps = service.snapshots(params.subject.as_deref());
        Ok(match kind {
            ReportKind::Coverage => Json(reports::coverage(&snaps, d)?).into_response(),
            ReportKind::Temporal => Json(reports::temporal(
                &snaps,
                params.group_by.unwrap_or(GroupBy::Activity),
                params.horizon_min.unwrap_or(DEFAULT_HORIZON_MIN),
            )?)
            .into_response(),
            ReportKind::Quality => {
                Json(reports::quality(&snaps, params.min_count.unwrap_or(DEFAULT_MIN_COUNT))?).into_response()
            }
            ReportKind::Response => Json(reports::responses(&snaps)?).into_response(),
        })
    })
    .await?
}

async fn get_health(State(service): State<Arc<Service>>) -> Json<crate::service::Health> {
    Json(service.health())
}
