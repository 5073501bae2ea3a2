use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use carbontag_core::{export_artifact, import_artifact, AdRenderMetrics, Grade, LabelBins};
use carbontag_service::api::ErrorBody;
use carbontag_service::log::read_records;
use carbontag_service::{router, Engine, EstimateRequest, EstimateResponse, LogConfig, LogStats, LogWriter, ModelInfo};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

const ARTIFACT: &[u8] = include_bytes!("fixtures/model-v1.artifact.json");
const REQUESTS: &str = include_str!("fixtures/requests.ndjson");

fn engine(dir: &Path, with_model: bool) -> Arc<Engine> {
    let engine = Engine::new(LogWriter::open(LogConfig::new(dir)).unwrap());
    if with_model {
        engine.load_model(ARTIFACT).unwrap();
    }
    Arc::new(engine)
}

fn fixture_requests() -> Vec<EstimateRequest> {
    REQUESTS.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

async fn call(engine: &Arc<Engine>, method: &str, uri: &str, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap();
    let resp = router(engine.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn post_estimate(engine: &Arc<Engine>, req: &EstimateRequest) -> (StatusCode, Vec<u8>) {
    call(engine, "POST", "/v1/estimate", serde_json::to_vec(req).unwrap()).await
}

/// Evaluates the artifact straight from its JSON, without the core model types.
fn json_oracle(artifact: &[u8], params: &std::collections::BTreeMap<String, f64>) -> (f64, Grade) {
    let doc: Value = serde_json::from_slice(artifact).unwrap();
    let mut y = doc["intercept"].as_f64().unwrap();
    let coefs = doc["coefficients"].as_array().unwrap();
    for (spec, c) in doc["feature_specs"].as_array().unwrap().iter().zip(coefs) {
        let mut x = 1.0;
        for f in spec["factors"].as_array().unwrap() {
            x *= params[f.as_str().unwrap()];
        }
        y += c.as_f64().unwrap() * x;
    }
    let edges: Vec<f64> = doc["label_bins"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let idx = edges.iter().rposition(|&e| y >= e).unwrap_or(0);
    (y, Grade::ALL[idx])
}

#[tokio::test]
async fn fixture_requests_match_offline_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine(dir.path(), true);
    let (model, bins) = import_artifact(ARTIFACT).unwrap();
    for req in fixture_requests() {
        let (status, body) = post_estimate(&engine, &req).await;
        assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
        let resp: EstimateResponse = serde_json::from_slice(&body).unwrap();

        let metrics = AdRenderMetrics::from_named(req.parameters.iter().map(|(k, &v)| (k.as_str(), v))).unwrap();
        let offline = model.predict(&metrics).unwrap();
        assert_eq!(resp.nead_estimate.to_bits(), offline.0.to_bits());
        assert_eq!(resp.label, bins.label(offline).unwrap().grade);
        assert_eq!(resp.model_version, "fixture-v1");

        let (y, g) = json_oracle(ARTIFACT, &req.parameters);
        assert!((resp.nead_estimate - y).abs() <= 1e-12 * y.abs().max(1.0));
        assert_eq!(resp.label, g);
    }
    assert_eq!(read_records(dir.path()).unwrap().len(), 200);
}

#[tokio::test]
async fn response_wire_names() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine(dir.path(), true);
    let (_, body) = post_estimate(&engine, &fixture_requests()[0]).await;
    let v: Value = serde_json::from_slice(&body).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["label", "model_version", "nEad_estimate", "processing_time"]);
    assert!(v["label"].as_str().unwrap().len() == 1);
}

#[tokio::test]
async fn missing_parameter_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine(dir.path(), true);
    let mut req = fixture_requests()[0].clone();
    req.parameters.remove("screen_size");
    let (status, body) = post_estimate(&engine, &req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err: ErrorBody = serde_json::from_slice(&body).unwrap();
    assert_eq!(err.field.as_deref(), Some("screen_size"));
    assert!(err.message.contains("screen_size"));
    assert!(read_records(dir.path()).unwrap().is_empty());
}

#[tokio::test]
async fn unknown_and_negative_parameters_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine(dir.path(), true);
    let mut req = fixture_requests()[0].clone();
    req.parameters.insert("cpu_temperature".into(), 1.0);
    let (status, body) = post_estimate(&engine, &req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err: ErrorBody = serde_json::from_slice(&body).unwrap();
    assert_eq!(err.field.as_deref(), Some("cpu_temperature"));

    let mut req = fixture_requests()[0].clone();
    req.parameters.insert("tcp_mean".into(), -3.0);
    let (status, body) = post_estimate(&engine, &req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err: ErrorBody = serde_json::from_slice(&body).unwrap();
    assert_eq!(err.field.as_deref(), Some("tcp_mean"));
}

#[tokio::test]
async fn malformed_body_is_bad_request() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine(dir.path(), true);
    let (status, _) = call(&engine, "POST", "/v1/estimate", b"{\"ad_id\":".to_vec()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&engine, "POST", "/v1/estimate", b"{\"ad_id\":\"x\"}".to_vec()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn no_model_is_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine(dir.path(), false);
    let (status, body) = post_estimate(&engine, &fixture_requests()[0]).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    let err: ErrorBody = serde_json::from_slice(&body).unwrap();
    assert_eq!(err.error, "no_model");
    let (status, _) = call(&engine, "GET", "/v1/model", vec![]).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn model_endpoint_reports_active_model() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine(dir.path(), true);
    let (status, body) = call(&engine, "GET", "/v1/model", vec![]).await;
    assert_eq!(status, StatusCode::OK);
    let info: ModelInfo = serde_json::from_slice(&body).unwrap();
    assert_eq!(info.model_version, "fixture-v1");
    assert_eq!(info.features.len(), 11);
    assert_eq!(info.parameters.len(), 8);
    assert_eq!(info.checksum.len(), 32);
    assert!(std::str::from_utf8(ARTIFACT).unwrap().contains(&info.checksum));
}

fn artifact_with_version(version: &str) -> Vec<u8> {
    let (mut model, bins) = import_artifact(ARTIFACT).unwrap();
    model.version = version.into();
    export_artifact(&model, &bins).unwrap()
}

#[tokio::test]
async fn swap_changes_version_of_later_responses() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine(dir.path(), true);
    let req = &fixture_requests()[3];
    let (_, body) = post_estimate(&engine, req).await;
    let before: EstimateResponse = serde_json::from_slice(&body).unwrap();

    let (status, body) = call(&engine, "POST", "/v1/model", artifact_with_version("fixture-v2")).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let (_, body) = post_estimate(&engine, req).await;
    let after: EstimateResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(before.model_version, "fixture-v1");
    assert_eq!(after.model_version, "fixture-v2");
    assert_eq!(before.nead_estimate, after.nead_estimate);
}

#[tokio::test]
async fn invalid_swap_keeps_current_model() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine(dir.path(), true);

    let tampered = std::str::from_utf8(ARTIFACT).unwrap().replace("fixture-v1", "fixture-v9").into_bytes();
    for bad in [tampered, b"not json".to_vec(), Vec::new()] {
        let (status, body) = call(&engine, "POST", "/v1/model", bad).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        let err: ErrorBody = serde_json::from_slice(&body).unwrap();
        assert_eq!(err.error, "invalid_artifact");
    }
    let (status, body) = post_estimate(&engine, &fixture_requests()[0]).await;
    assert_eq!(status, StatusCode::OK);
    let resp: EstimateResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(resp.model_version, "fixture-v1");
}

#[tokio::test]
async fn stats_on_empty_store() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine(dir.path(), true);
    let (status, body) = call(&engine, "GET", "/v1/stats", vec![]).await;
    assert_eq!(status, StatusCode::OK);
    let stats: LogStats = serde_json::from_slice(&body).unwrap();
    assert_eq!(stats.total, 0);
    assert_eq!(stats.by_grade.len(), 7);
    assert!(stats.by_grade.values().all(|&c| c == 0));
}

/// A model with no features whose intercept alone decides the grade.
fn constant_artifact(value: f64, version: &str) -> Vec<u8> {
    let model = carbontag_core::LinearModel::new(value, vec![], version).unwrap();
    export_artifact(&model, &LabelBins::default()).unwrap()
}

#[tokio::test]
async fn stats_count_grades_per_model_version() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine(dir.path(), false);
    let req = fixture_requests()[0].clone();
    for (value, version) in [(0.5, "a"), (0.2, "a"), (40.0, "g")] {
        engine.load_model(&constant_artifact(value, version)).unwrap();
        assert_eq!(post_estimate(&engine, &req).await.0, StatusCode::OK);
    }
    let (_, body) = call(&engine, "GET", "/v1/stats", vec![]).await;
    let stats: LogStats = serde_json::from_slice(&body).unwrap();
    assert_eq!(stats.total, 3);
    assert_eq!(stats.by_grade[&Grade::A], 2);
    assert_eq!(stats.by_grade[&Grade::G], 1);
    assert_eq!(stats.by_grade.values().sum::<u64>(), 3);
    assert_eq!(stats.by_model_version["a"][&Grade::A], 2);
    assert_eq!(stats.by_model_version["g"][&Grade::G], 1);
}

#[tokio::test]
async fn timeout_maps_to_gateway_timeout() {
    use axum::response::IntoResponse;
    let resp = carbontag_service::ServiceError::Timeout(100).into_response();
    assert_eq!(resp.status(), StatusCode::GATEWAY_TIMEOUT);
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    let err: ErrorBody = serde_json::from_slice(&body).unwrap();
    assert_eq!(err.error, "timeout");
    assert!(err.message.contains("100 ms"));
}
