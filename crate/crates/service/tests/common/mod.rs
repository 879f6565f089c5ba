#![allow(dead_code)]

use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

use prokno_service::artifacts::Artifacts;
use prokno_service::config::MetricDefaults;
use prokno_service::http::{router, AppState};

pub fn core_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core")
}

pub fn data(name: &str) -> PathBuf {
    core_dir().join("data").join(name)
}

pub fn test_data(name: &str) -> PathBuf {
    core_dir().join("tests/data").join(name)
}

pub fn app() -> Router {
    let dir = core_dir().join("data");
    let artifacts = Artifacts::load(&dir, &dir, &dir, &dir.join("rules")).expect("bundled data loads");
    router(Arc::new(AppState::new(artifacts, MetricDefaults::default(), Duration::from_secs(60))))
}

/// Send one request and return the status with the raw body text.
pub async fn call(app: &Router, method: Method, path: &str, body: Option<&str>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(path)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

pub fn post(app: &Router, path: &str, body: &serde_json::Value) -> (StatusCode, String) {
    block_on(call(app, Method::POST, path, Some(&body.to_string())))
}

pub fn get(app: &Router, path: &str) -> (StatusCode, String) {
    block_on(call(app, Method::GET, path, None))
}

pub fn block_on<F: std::future::Future>(f: F) -> F::Output {
    tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap().block_on(f)
}

pub struct CliOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn cli(args: &[&str]) -> CliOutput {
    let out = Command::new(env!("CARGO_BIN_EXE_prokno")).args(args).output().unwrap();
    CliOutput {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}
