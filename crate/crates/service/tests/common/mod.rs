#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use guides_core::access::{AccessPolicy, Role};
use guides_core::dataset::load_dataset;
use guides_core::pipeline::{detect_and_repair, run_pipeline, PipelineConfig, Stage};
use guides_core::repair::{InferenceParams, SymbolParams};
use guides_service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const ADMIN: &str = "t-admin";
pub const PLANNER: &str = "t-planner";
pub const CREW: &str = "t-crew";

pub fn campus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/campus")
}

pub fn policy() -> AccessPolicy {
    AccessPolicy::default().with_tokens(BTreeMap::from([
        (ADMIN.to_string(), Role::Admin),
        (PLANNER.to_string(), Role::Planner),
        (CREW.to_string(), Role::Crew),
    ]))
}

/// Campus dataset with ontologies, flagged but unchanged.
pub fn detected() -> AppState {
    let mut ds = load_dataset(&campus().join("dataset.json")).unwrap();
    detect_and_repair(
        &mut ds.network,
        &mut ds.ledger,
        &InferenceParams::default(),
        &SymbolParams::default(),
        Stage::Detect,
    )
    .unwrap();
    AppState::new(ds, policy(), 25.0)
}

/// Output of the repair stage: suggestions applied, flags open.
pub fn repaired() -> (AppState, tempfile::TempDir) {
    let out = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(campus().join("pipeline.json")).unwrap();
    let mut config: PipelineConfig = serde_json::from_str(&text).unwrap();
    config.output_dir = Some(out.path().to_path_buf());
    run_pipeline(&config, &campus(), Stage::Repair).unwrap();
    let ds = load_dataset(&out.path().join("manifest.json")).unwrap();
    (AppState::new(ds, policy(), 25.0), out)
}

pub async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = req
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

pub fn app(state: AppState) -> Router {
    router(state)
}
