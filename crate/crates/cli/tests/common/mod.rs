//! Helpers for driving the session API in-process.
#![allow(dead_code)]

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use glanceseg::{BaselineBackend, GazeSample, Pipeline, PipelineConfig};
use glanceseg_cli::service::{self, ServiceOptions, SharedState};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

const BOUNDARY: &str = "glanceseg-test-boundary";

pub fn pipeline(debounce_ms: u64) -> Arc<Pipeline> {
    let config = PipelineConfig {
        debounce_ms,
        ..Default::default()
    };
    let backend = Arc::new(BaselineBackend::new(config.grow_tolerance));
    Arc::new(Pipeline::new(config, backend).unwrap())
}

pub fn app(debounce_ms: u64, opts: ServiceOptions) -> (Router, SharedState) {
    let state = service::AppState::new(pipeline(debounce_ms), opts);
    (service::router(state.clone()), state)
}

pub async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, body)
}

pub fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

pub fn post_json(uri: &str, body: &Value) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

pub fn upload(png: &[u8]) -> Request<Body> {
    let mut body = Vec::new();
    body.extend_from_slice(
        format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"f.png\"\r\nContent-Type: image/png\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(png);
    body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    Request::post("/session")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(body))
        .unwrap()
}

pub async fn create(app: &Router, png: &[u8]) -> String {
    let (status, body) = call(app, upload(png)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body["id"].as_str().unwrap().to_string()
}

pub async fn post_gaze(app: &Router, id: &str, samples: &[GazeSample]) -> (StatusCode, Value) {
    call(app, post_json(&format!("/session/{id}/gaze"), &serde_json::json!({ "samples": samples }))).await
}

/// Polls until a result newer than `since` is published and the session is
/// idle again.
pub async fn wait_result(app: &Router, id: &str, since: u64) -> Value {
    let deadline = Instant::now() + Duration::from_secs(120);
    loop {
        let (status, body) = call(app, get(&format!("/session/{id}/result?since={since}"))).await;
        if status == StatusCode::OK && body["status"] == "ready" {
            return body;
        }
        assert!(Instant::now() < deadline, "no result for {id} after {since}");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}
