use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use govsim_service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn create(app: &Router, horizon: u32) -> String {
    let (s, v) = call_json(
        app,
        "POST",
        "/sessions",
        Some(json!({"seed": 7, "overrides": {"horizon_T": horizon}})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

async fn advance(app: &Router, id: &str, n: u32) -> (StatusCode, Value) {
    call_json(app, "POST", &format!("/sessions/{id}/advance"), Some(json!({"n_steps": n}))).await
}

async fn csv(app: &Router, id: &str, since: u32) -> String {
    let (s, b) = call(app, "GET", &format!("/sessions/{id}/metrics?since_t={since}&format=csv"), None).await;
    assert_eq!(s, StatusCode::OK);
    String::from_utf8(b).unwrap()
}

fn app() -> Router {
    router(AppState::new())
}

#[tokio::test]
async fn new_session_is_paused_at_zero() {
    let app = app();
    let (s, v) = call_json(&app, "POST", "/sessions", Some(json!({}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["t"], 0);
    assert_eq!(v["backlog"], 0);
    assert_eq!(v["finished"], false);
    assert!(v["config"]["governance"]["tau_max"].is_number());
}

#[tokio::test]
async fn bad_override_lists_valid_keys() {
    let app = app();
    let (s, v) = call_json(&app, "POST", "/sessions", Some(json!({"overrides": {"governance.nope": 1}}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["key"], "governance.nope");
    assert!(v["valid_keys"].as_array().unwrap().iter().any(|k| k == "governance.triage_step"));
    let (s, _) = call_json(&app, "POST", "/sessions", Some(json!({"overrides": {"governance.tau_max": "high"}}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn sessions_are_independent() {
    let app = app();
    let a = create(&app, 30).await;
    let b = create(&app, 30).await;
    assert_ne!(a, b);
    advance(&app, &a, 5).await;
    let (_, vb) = call_json(&app, "GET", &format!("/sessions/{b}"), None).await;
    assert_eq!(vb["t"], 0);
    let (s, _) = call_json(&app, "GET", "/sessions/999/summary", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn split_advance_matches_single_advance() {
    let app = app();
    let a = create(&app, 40).await;
    let b = create(&app, 40).await;
    advance(&app, &a, 10).await;
    advance(&app, &a, 10).await;
    let (_, v) = advance(&app, &b, 20).await;
    assert_eq!(v["rows"].as_array().unwrap().len(), 20);
    assert_eq!(csv(&app, &a, 0).await, csv(&app, &b, 0).await);
    let ev = |id: String| {
        let app = app.clone();
        async move { call(&app, "GET", &format!("/sessions/{id}/events?format=jsonl"), None).await.1 }
    };
    assert_eq!(ev(a.clone()).await, ev(b.clone()).await);
}

#[tokio::test]
async fn advance_zero_and_past_horizon() {
    let app = app();
    let id = create(&app, 12).await;
    let (s, v) = advance(&app, &id, 0).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["t"], 0);
    let (_, v) = advance(&app, &id, 50).await;
    assert_eq!(v["t"], 12);
    assert_eq!(v["finished"], true);
    assert_eq!(v["rows"].as_array().unwrap().len(), 12);
    let (s, _) = advance(&app, &id, 1).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn metrics_and_events_paginate() {
    let app = app();
    let id = create(&app, 50).await;
    advance(&app, &id, 50).await;
    let (_, rows) = call_json(&app, "GET", &format!("/sessions/{id}/metrics?since_t=0"), None).await;
    assert_eq!(rows.as_array().unwrap().len(), 50);
    let (_, rows) = call_json(&app, "GET", &format!("/sessions/{id}/metrics?since_t=60"), None).await;
    assert!(rows.as_array().unwrap().is_empty());

    let full = csv(&app, &id, 0).await;
    let tail = csv(&app, &id, 20).await;
    let head_rows: Vec<&str> = full.lines().take(21).collect();
    let joined = head_rows.join("\n") + "\n" + &tail.lines().skip(1).collect::<Vec<_>>().join("\n") + "\n";
    assert_eq!(joined, full);

    let (_, all) = call(&app, "GET", &format!("/sessions/{id}/events?format=jsonl"), None).await;
    let (_, evs) = call_json(&app, "GET", &format!("/sessions/{id}/events"), None).await;
    let n = evs.as_array().unwrap().len() as u64;
    let mut pieces = Vec::new();
    let mut seq = 0;
    while seq < n {
        let (_, b) = call(&app, "GET", &format!("/sessions/{id}/events?since_seq={seq}&format=jsonl"), None).await;
        let first = String::from_utf8(b).unwrap().lines().take(7).map(|l| l.to_string() + "\n").collect::<String>();
        seq += first.lines().count() as u64;
        pieces.push(first);
    }
    assert_eq!(pieces.concat().into_bytes(), all);
    let (_, past) = call_json(&app, "GET", &format!("/sessions/{id}/events?since_seq={}", n + 5), None).await;
    assert!(past.as_array().unwrap().is_empty());
}

fn arrivals(events: &Value) -> Vec<f64> {
    events
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["kind"] == "triage_summary")
        .map(|e| e["payload"]["arrivals"].as_f64().unwrap())
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[tokio::test]
async fn injection_doubles_arrivals_and_is_audited_first() {
    let app = app();
    let id = create(&app, 80).await;
    advance(&app, &id, 40).await;
    let (s, v) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/inject"),
        Some(json!({"path": "stress.arrival_multiplier", "value": 2.0})),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let inj_seq = v["events"][0]["seq"].as_u64().unwrap();
    assert_eq!(v["events"][0]["kind"], "run_meta");
    advance(&app, &id, 40).await;
    let (_, evs) = call_json(&app, "GET", &format!("/sessions/{id}/events"), None).await;
    let a = arrivals(&evs);
    let (before, after) = a.split_at(40);
    let ratio = mean(after) / mean(before);
    assert!((1.7..2.3).contains(&ratio), "arrival ratio {ratio}");
    let first_affected = evs
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["t"] == 40 && e["kind"] != "run_meta")
        .unwrap();
    assert!(first_affected["seq"].as_u64().unwrap() > inj_seq);
}

#[tokio::test]
async fn immutable_and_unknown_injections_are_rejected() {
    let app = app();
    let id = create(&app, 20).await;
    for (path, value) in [("seed", json!(9)), ("horizon_T", json!(10)), ("stress.nope", json!(1.0))] {
        let (s, _) = call_json(
            &app,
            "POST",
            &format!("/sessions/{id}/inject"),
            Some(json!({"path": path, "value": value})),
        )
        .await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{path}");
    }
}

#[tokio::test]
async fn forks_replay_their_parent() {
    let app = app();
    let id = create(&app, 60).await;
    advance(&app, &id, 20).await;
    let (s, f) = call_json(&app, "POST", &format!("/sessions/{id}/fork"), None).await;
    assert_eq!(s, StatusCode::CREATED);
    let fork = f["session_id"].as_str().unwrap().to_string();
    assert_eq!(f["t"], 20);
    advance(&app, &id, 40).await;
    advance(&app, &fork, 40).await;
    assert_eq!(csv(&app, &id, 0).await, csv(&app, &fork, 0).await);

    let (_, g) = call_json(&app, "POST", &format!("/sessions/{id}/fork"), None).await;
    assert_eq!(g["finished"], true);
}

#[tokio::test]
async fn fork_with_injection_diverges_only_afterwards() {
    let app = app();
    let id = create(&app, 60).await;
    advance(&app, &id, 25).await;
    let (_, f) = call_json(&app, "POST", &format!("/sessions/{id}/fork"), None).await;
    let fork = f["session_id"].as_str().unwrap().to_string();
    call_json(
        &app,
        "POST",
        &format!("/sessions/{fork}/inject"),
        Some(json!({"path": "stress.noise_multiplier", "value": 3.0, "duration": 10})),
    )
    .await;
    advance(&app, &id, 35).await;
    advance(&app, &fork, 35).await;
    let a = csv(&app, &id, 0).await;
    let b = csv(&app, &fork, 0).await;
    let (la, lb): (Vec<&str>, Vec<&str>) = (a.lines().collect(), b.lines().collect());
    assert_eq!(la[..26], lb[..26]);
    assert_ne!(la[26..], lb[26..]);
}

#[tokio::test]
async fn summary_reports_the_run() {
    let app = app();
    let id = create(&app, 15).await;
    advance(&app, &id, 15).await;
    let (s, v) = call_json(&app, "GET", &format!("/sessions/{id}/summary"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["steps_completed"], 15);
    assert_eq!(v["chain_head"].as_str().unwrap().len(), 64);
}
