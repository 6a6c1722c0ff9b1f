use std::path::PathBuf;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use serde_json::Value;
use stockflow_core::engine::Fault;
use stockflow_core::wire::{ErrorBody, LoopsPayload, ModelList, RunPayload};
use stockflow_service::{router, router_with_budget, Catalog};
use tower::ServiceExt;

fn repo(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// A directory holding the shipped models plus the test fixtures.
fn model_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for src in ["models/supply_demand.sdm", "tests/fixtures/acyclic.sdm", "tests/fixtures/zero_denominator.sdm"] {
        let path = repo(src);
        std::fs::copy(&path, dir.path().join(path.file_name().unwrap())).unwrap();
    }
    dir
}

fn app() -> Router {
    let dir = model_dir();
    router(Catalog::load_dir(dir.path()).unwrap())
}

async fn call(app: Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    let req = req.body(body.map(|b| Body::from(b.to_owned())).unwrap_or_else(Body::empty)).unwrap();
    let res = app.oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = to_bytes(res.into_body(), usize::MAX).await.unwrap();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&bytes)));
    (status, value)
}

async fn run(app: Router, id: &str, body: &str) -> (StatusCode, Value) {
    call(app, Method::POST, &format!("/models/{id}/run"), Some(body)).await
}

#[tokio::test]
async fn lists_models_with_sliders_in_id_order() {
    let (status, body) = call(app(), Method::GET, "/models", None).await;
    assert_eq!(status, StatusCode::OK);
    let list: ModelList = serde_json::from_value(body).unwrap();
    let ids: Vec<&str> = list.models.iter().map(|m| m.id.as_str()).collect();
    assert_eq!(ids, ["acyclic", "supply_demand", "zero_denominator"]);
    let sd = &list.models[1];
    assert_eq!(sd.elements.len(), 15);
    let mut sliders: Vec<&str> = sd.sliders.iter().map(|s| s.name.as_str()).collect();
    sliders.sort();
    assert_eq!(
        sliders,
        [
            "Shift_Height",
            "Shift_Start",
            "Time_for_Consumers_to_React_to_Price_Changes",
            "Time_for_Producers_to_React_to_Price_Changes",
            "Time_to_Adjust_Price"
        ]
    );
    let height = sd.sliders.iter().find(|s| s.name == "Shift_Height").unwrap();
    assert_eq!((height.default, height.min, height.max), (10.0, -20.0, 40.0));
    let adjust = sd.sliders.iter().find(|s| s.name == "Time_to_Adjust_Price").unwrap();
    assert_eq!((adjust.default, adjust.min, adjust.max), (1.0, 0.0, 4.0));
    assert!(list.errors.is_empty());
}

#[tokio::test]
async fn empty_directory_and_bad_files() {
    let empty = tempfile::tempdir().unwrap();
    let (_, body) = call(router(Catalog::load_dir(empty.path()).unwrap()), Method::GET, "/models", None).await;
    assert_eq!(body, serde_json::json!({ "models": [], "errors": [] }));

    let dir = model_dir();
    std::fs::copy(repo("tests/fixtures/broken_units.sdm"), dir.path().join("broken_units.sdm")).unwrap();
    std::fs::write(dir.path().join("notes.txt"), "not a model").unwrap();
    let (_, body) = call(router(Catalog::load_dir(dir.path()).unwrap()), Method::GET, "/models", None).await;
    let list: ModelList = serde_json::from_value(body).unwrap();
    assert_eq!(list.models.len(), 3);
    assert_eq!(list.errors.len(), 1);
    assert_eq!(list.errors[0].file, "broken_units.sdm");
    assert!(list.errors[0].message.contains("Bad"), "{}", list.errors[0].message);
}

#[tokio::test]
async fn default_run_carries_settled_and_analytic_equilibria() {
    let (status, body) = run(app(), "supply_demand", "{}").await;
    assert_eq!(status, StatusCode::OK);
    let payload: RunPayload = serde_json::from_value(body).unwrap();
    assert_eq!(payload.times.len(), 401);
    let analytic = payload.analytic.unwrap();
    assert!((analytic.price - 27.5).abs() < 1e-6 && (analytic.quantity - 55.0).abs() < 1e-6);
    let settled = payload.settled("Price").unwrap();
    assert!((settled.value - analytic.price).abs() <= 0.05);
    assert!(payload.fault.is_none());
}

#[tokio::test]
async fn overrides_and_empty_body() {
    let (status, body) = run(app(), "supply_demand", r#"{"overrides": {"Shift_Height": 0}}"#).await;
    assert_eq!(status, StatusCode::OK);
    let payload: RunPayload = serde_json::from_value(body).unwrap();
    assert!(payload.series("Price").unwrap().iter().all(|&p| p == 25.0));
    let analytic = payload.analytic.unwrap();
    assert!((analytic.price - 25.0).abs() < 1e-6);

    let (status, body) = call(app(), Method::POST, "/models/supply_demand/run", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["times"].as_array().unwrap().len(), 401);

    let (_, short) = run(app(), "supply_demand", r#"{"stop": 20, "dt": 0.125, "save": 0.5, "method": "rk4"}"#).await;
    assert_eq!(short["times"].as_array().unwrap().len(), 41);
}

#[tokio::test]
async fn validation_errors_are_field_level() {
    let (status, body) = run(app(), "supply_demand", r#"{"overrides": {"Price": 3, "Nope": 1}, "dt": 0, "method": "euler"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err: ErrorBody = serde_json::from_value(body).unwrap();
    let fields: Vec<&str> = err.fields.iter().map(|f| f.field.as_str()).collect();
    for f in ["dt", "overrides.Price", "overrides.Nope"] {
        assert!(fields.contains(&f), "{fields:?}");
    }
    let (status, body) = run(app(), "supply_demand", r#"{"method": "leapfrog"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["fields"][0]["field"], "method");
    let (status, body) = run(app(), "supply_demand", "{not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("JSON"));
    let (status, _) = run(app(), "supply_demand", r#"{"stop": "soon"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn numeric_fault_is_422_with_the_partial_run() {
    let (status, body) = run(app(), "zero_denominator", "{}").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err: ErrorBody = serde_json::from_value(body).unwrap();
    let partial = err.run.unwrap();
    let fault = partial.fault.clone().unwrap();
    assert_eq!(fault.time(), 2.0);
    assert_eq!(fault.subject(), "Coverage");
    assert_eq!(*partial.times.last().unwrap(), 1.75);
    assert!(err.error.contains("Coverage"));
}

#[tokio::test]
async fn time_budget_aborts_with_422() {
    let dir = model_dir();
    let app = router_with_budget(Catalog::load_dir(dir.path()).unwrap(), Duration::ZERO);
    let (status, body) = run(app, "supply_demand", r#"{"stop": 100000, "dt": 0.001, "save": 1}"#).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let partial: RunPayload = serde_json::from_value(body["run"].clone()).unwrap();
    assert!(matches!(partial.fault, Some(Fault::Deadline { .. })));
    assert!(partial.times.len() < 100001);
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let (status, body) = run(app(), "nope", "{}").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("nope"));
    let (status, _) = call(app(), Method::GET, "/models/nope/loops", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn loops_endpoint() {
    let (status, body) = call(app(), Method::GET, "/models/supply_demand/loops", None).await;
    assert_eq!(status, StatusCode::OK);
    let payload: LoopsPayload = serde_json::from_value(body.clone()).unwrap();
    let badges: Vec<char> = payload.report.loops.iter().map(|l| l.polarity.badge()).collect();
    assert_eq!(badges.iter().filter(|b| **b == 'B').count(), 2);
    assert_eq!(badges.iter().filter(|b| **b == '?').count(), 1);
    assert_eq!(body["loops"][0]["polarity"], "indeterminate");
    let (_, body) = call(app(), Method::GET, "/models/acyclic/loops", None).await;
    assert_eq!(body["loops"], serde_json::json!([]));
}

#[tokio::test]
async fn repeated_requests_are_identical() {
    let app = app();
    let (_, first) = run(app.clone(), "supply_demand", r#"{"overrides": {"Time_to_Adjust_Price": 2}}"#).await;
    let (_, second) = run(app.clone(), "supply_demand", r#"{"overrides": {"Time_to_Adjust_Price": 2}}"#).await;
    let (_, third) = run(app, "supply_demand", "{}").await;
    assert_eq!(first, second);
    assert_ne!(first, third);
}

#[tokio::test]
async fn cors_is_permissive() {
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/models")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let res = app().oneshot(req).await.unwrap();
    assert_eq!(res.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");
}
