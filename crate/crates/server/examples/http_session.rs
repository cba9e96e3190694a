//! Drives the HTTP service in-process: create a session, add an event span,
//! take the suggested intervention and accept it, then read the state.

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use hoi_core::config::EngineConfig;
use hoi_core::ingest::load_events;
use hoi_core::session::{layout, DataRoot};
use hoi_core::synth::demo_ontology;
use hoi_server::api::{router, AppState};
use hoi_server::cli::{gen_demo, ScoreKind};

async fn call(app: &Router, method: &str, uri: &str, body: Value) -> Value {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    serde_json::from_slice(&bytes).unwrap()
}

#[tokio::main]
async fn main() {
    let dir = tempfile::tempdir().unwrap();
    let root = DataRoot::new(dir.path());
    gen_demo(&root, "demo", 0, 2, ScoreKind::Perfect).unwrap();
    let truth = &load_events(root.clip_dir("demo").join(layout::EVENTS), &demo_ontology()).unwrap()[0];
    let app = router(AppState::new(root, EngineConfig::default()));

    let view = call(&app, "POST", "/v1/sessions", json!({"version": 1, "clip": "demo"})).await;
    let id = view["id"].as_str().unwrap().to_string();
    println!("session {id}");

    let hand = serde_json::to_value(truth.hand).unwrap();
    let delta = call(
        &app,
        "POST",
        &format!("/v1/sessions/{id}/events"),
        json!({"hand": hand, "t_s": truth.t_s, "t_e": truth.t_e}),
    )
    .await;
    println!("created event, state hash {}", delta["state_hash"]);

    let next = call(&app, "POST", &format!("/v1/sessions/{id}/next"), json!({"hand": hand})).await;
    println!("next: {}", serde_json::to_string_pretty(&next).unwrap());
    if next["status"] == "ask" {
        let delta = call(
            &app,
            "POST",
            &format!("/v1/sessions/{id}/respond"),
            json!({"hand": hand, "intervention": next["id"], "response": {"kind": "accept", "latency": 0.9}}),
        )
        .await;
        for d in delta["diff"].as_array().unwrap() {
            println!("{} -> {} ({})", d["field"], d["new"]["value"], d["new"]["status"]);
        }
    }
}
