mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::{eager_config, open, records, simulator};
use http_body_util::BodyExt;
use ppgema_gateway::http::{router, ErrorBody, PendingQueries};
use ppgema_gateway::{IngestOutcome, ResponseAck};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map_or_else(Body::empty, Body::from)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

fn parse<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> T {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

fn app(dir: &std::path::Path) -> Router {
    router(Arc::new(open(&eager_config(dir))))
}

#[tokio::test]
async fn samples_endpoint_creates_then_deduplicates() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let payload = serde_json::to_string(&records(&[simulator(0, 1.0, 5)], 1)[0].sample).unwrap();
    let (status, body) = call(&app, "POST", "/v1/samples", Some(payload.clone())).await;
    assert_eq!(status, StatusCode::CREATED);
    let first: IngestOutcome = parse(&body);
    let (status, body) = call(&app, "POST", "/v1/samples", Some(payload)).await;
    assert_eq!(status, StatusCode::OK);
    let second: IngestOutcome = parse(&body);
    assert!(second.duplicate);
    assert_eq!(first.record.sample_id, second.record.sample_id);
}

#[tokio::test]
async fn malformed_samples_get_field_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let mut payload = records(&[simulator(0, 1.0, 5)], 1).remove(0).sample;
    payload.ppg.truncate(100);
    let (status, body) = call(&app, "POST", "/v1/samples", Some(serde_json::to_string(&payload).unwrap())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err: ErrorBody = parse(&body);
    assert!(err.fields.iter().any(|f| f.field == "ppg" && f.message.contains("2400")));

    let (status, _) = call(&app, "POST", "/v1/samples", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = call(&app, "POST", "/v1/samples", Some(json!({"subject_id": "S01"}).to_string())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(parse::<ErrorBody>(&body).error.contains("t_start_ms"));
}

#[tokio::test]
async fn labeling_loop_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());

    let (status, body) = call(&app, "GET", "/v1/subjects/S01/ema/pending", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(parse::<PendingQueries>(&body).queries.is_empty());

    let mut query = None;
    for r in records(&[simulator(0, 1.0, 5)], 20) {
        let (status, body) = call(&app, "POST", "/v1/samples", Some(serde_json::to_string(&r.sample).unwrap())).await;
        assert_eq!(status, StatusCode::CREATED);
        if let Some(q) = parse::<IngestOutcome>(&body).query {
            query = Some(q);
            break;
        }
    }
    let q = query.expect("a query is dispatched");

    let (_, body) = call(&app, "GET", "/v1/subjects/S01/ema/pending", None).await;
    let pending: PendingQueries = parse(&body);
    assert_eq!(pending.queries, vec![q.clone()]);
    assert_eq!(pending.now_ms, q.dispatched_at_ms);

    let uri = format!("/v1/ema/{}/response", q.ema_id);
    let bad = json!({"stress": 7, "emotion": "sad", "activity": "sitting"}).to_string();
    let (status, body) = call(&app, "POST", &uri, Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(parse::<ErrorBody>(&body).error.contains("0-4"));

    let good = json!({
        "responded_at_ms": q.dispatched_at_ms + 180_000,
        "stress": 2, "emotion": "happy", "activity": "lying_down", "client_render_ms": 900
    })
    .to_string();
    let (status, body) = call(&app, "POST", &uri, Some(good.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let ack: ResponseAck = parse(&body);
    assert_eq!(serde_json::to_value(ack.status).unwrap(), json!("accepted"));
    assert_eq!(ack.response_time_s, 180.0);
    let (_, body) = call(&app, "POST", &uri, Some(good)).await;
    assert!(parse::<ResponseAck>(&body).duplicate);

    let (_, body) = call(&app, "GET", "/v1/subjects/S01/ema/pending", None).await;
    assert!(parse::<PendingQueries>(&body).queries.is_empty());

    let (status, _) = call(&app, "POST", "/v1/ema/01UNKNOWN/response", Some(json!({"stress": 1, "emotion": "sad", "activity": "other"}).to_string())).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, body) = call(&app, "GET", "/v1/analytics/coverage?subject=S01", None).await;
    assert_eq!(status, StatusCode::OK);
    let curves: Value = parse(&body);
    assert_eq!(curves[0]["curve"].as_array().unwrap().len(), 1);
    let (status, body) = call(&app, "GET", "/v1/analytics/response", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parse::<Value>(&body)["responses"], json!(1));
    for report in ["temporal?group_by=stress", "quality?min_count=1"] {
        let (status, _) = call(&app, "GET", &format!("/v1/analytics/{report}"), None).await;
        assert_eq!(status, StatusCode::OK, "{report}");
    }
    let (status, _) = call(&app, "GET", "/v1/analytics/nonsense", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/v1/analytics/coverage?subject=S99", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, body) = call(&app, "GET", "/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let health: Value = parse(&body);
    assert_eq!(health["status"], json!("ok"));
    assert_eq!(health["subjects"], json!(1));
}

#[tokio::test]
async fn analytics_without_data_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body) = call(&app, "GET", "/v1/analytics/coverage", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(parse::<ErrorBody>(&body).error.contains("no samples"));
}

#[tokio::test]
async fn cors_preflight_is_answered() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/v1/subjects/S01/ema/pending")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "GET")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert!(resp.status().is_success());
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}
