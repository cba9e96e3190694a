use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

use hoi_core::config::EngineConfig;
use hoi_core::controller::Authority;
use hoi_core::event::Event;
use hoi_core::ingest::load_events;
use hoi_core::session::{layout, DataRoot};
use hoi_core::synth::demo_ontology;
use hoi_server::api::{router, AppState};
use hoi_server::cli::{gen_demo, ScoreKind};

struct Fixture {
    _tmp: TempDir,
    root: DataRoot,
    app: Router,
    events: Vec<Event>,
}

fn fixture(config: EngineConfig) -> Fixture {
    let tmp = TempDir::new().unwrap();
    let root = DataRoot::new(tmp.path());
    gen_demo(&root, "demo", 5, 3, ScoreKind::Perfect).unwrap();
    let events = load_events(root.clip_dir("demo").join(layout::EVENTS), &demo_ontology()).unwrap();
    let app = router(AppState::new(root.clone(), config));
    Fixture {
        _tmp: tmp,
        root,
        app,
        events,
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
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
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

async fn create(app: &Router) -> String {
    let (status, view) = call(app, "POST", "/v1/sessions", Some(json!({"version": 1, "clip": "demo"}))).await;
    assert_eq!(status, StatusCode::CREATED, "{view}");
    view["id"].as_str().unwrap().to_string()
}

fn hand_name(e: &Event) -> Value {
    serde_json::to_value(e.hand).unwrap()
}

async fn add_event(app: &Router, id: &str, e: &Event) -> Value {
    let (status, delta) = call(
        app,
        "POST",
        &format!("/v1/sessions/{id}/events"),
        Some(json!({"hand": hand_name(e), "t_s": e.t_s, "t_e": e.t_e})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{delta}");
    delta
}

fn truth_value(e: &Event, field: &str) -> Value {
    match field {
        "t_s" => json!({"frame": e.t_s}),
        "t_o" => json!({"frame": e.t_o}),
        "t_e" => json!({"frame": e.t_e}),
        "v" => serde_json::to_value(hoi_core::event::FieldValue::Verb(e.verb)).unwrap(),
        _ => serde_json::to_value(hoi_core::event::FieldValue::Noun(e.noun)).unwrap(),
    }
}

/// Answers interventions for the hand until `done`, accepting suggestions
/// and entering the truth for open queries.
async fn resolve(app: &Router, id: &str, e: &Event) {
    for _ in 0..32 {
        let (status, next) = call(app, "POST", &format!("/v1/sessions/{id}/next"), Some(json!({"hand": hand_name(e)}))).await;
        assert_eq!(status, StatusCode::OK, "{next}");
        assert_eq!(next["version"], 1);
        match next["status"].as_str().unwrap() {
            "done" => return,
            "applied" => continue,
            "ask" => {
                let xi = &next["intervention"];
                let response = if xi["authority"] == json!(Authority::HumanOnly) {
                    let values: Vec<Value> = xi["targets"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|f| json!({"field": f, "value": truth_value(e, f.as_str().unwrap())}))
                        .collect();
                    json!({"kind": "manual_entry", "values": values, "latency": 1.0})
                } else {
                    json!({"kind": "accept", "latency": 1.0})
                };
                let (status, delta) = call(
                    app,
                    "POST",
                    &format!("/v1/sessions/{id}/respond"),
                    Some(json!({"hand": hand_name(e), "intervention": next["id"], "response": response})),
                )
                .await;
                assert_eq!(status, StatusCode::OK, "{delta}");
            }
            other => panic!("unexpected status {other}"),
        }
    }
    panic!("no convergence");
}

#[tokio::test]
async fn create_session_reports_errors_with_codes() {
    let f = fixture(EngineConfig::default());
    let (status, body) = call(&f.app, "POST", "/v1/sessions", Some(json!({"clip": "nope"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "missing_asset");

    let (status, body) = call(
        &f.app,
        "POST",
        "/v1/sessions",
        Some(json!({"clip": "demo", "config": {"controller": {"lambda": [1.0, -2.0, 1.0, 1.0]}}})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "config_error");

    let (status, body) = call(&f.app, "POST", "/v1/sessions", Some(json!({"version": 7, "clip": "demo"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "bad_request");

    let (status, _) = call(&f.app, "POST", "/v1/sessions", Some(json!({"clip": "../demo"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = call(&f.app, "GET", "/v1/sessions/..%2Fclips/state", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "unknown_session");

    let id = create(&f.app).await;
    let (status, meta) = call(&f.app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(meta["clip"], "demo");
    let (_, list) = call(&f.app, "GET", "/v1/sessions", None).await;
    assert_eq!(list["sessions"], json!([id]));
}

#[tokio::test]
async fn accept_confirms_and_stale_ids_change_nothing() {
    let mut cfg = EngineConfig::default();
    cfg.controller.policy.max_authority = Authority::HumanConfirm;
    let f = fixture(cfg);
    let id = create(&f.app).await;
    let e = &f.events[0];
    add_event(&f.app, &id, e).await;

    let uri = format!("/v1/sessions/{id}/next");
    let (_, first) = call(&f.app, "POST", &uri, Some(json!({"hand": hand_name(e)}))).await;
    let (_, second) = call(&f.app, "POST", &uri, Some(json!({"hand": hand_name(e)}))).await;
    assert_eq!(first["status"], "ask");
    assert_ne!(first["id"], second["id"]);
    assert!(second["intervention"]["authority"] != json!("safe_local"));

    let (_, before) = call(&f.app, "GET", &format!("/v1/sessions/{id}/state"), None).await;
    let (status, body) = call(
        &f.app,
        "POST",
        &format!("/v1/sessions/{id}/respond"),
        Some(json!({"hand": hand_name(e), "intervention": first["id"], "response": {"kind": "accept"}})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "stale_intervention");
    assert_eq!(body["details"]["outstanding"], second["id"]);
    let (_, after) = call(&f.app, "GET", &format!("/v1/sessions/{id}/state"), None).await;
    assert_eq!(before, after);

    if second["intervention"]["authority"] == "human_confirm" {
        let (status, delta) = call(
            &f.app,
            "POST",
            &format!("/v1/sessions/{id}/respond"),
            Some(json!({"hand": hand_name(e), "intervention": second["id"], "response": {"kind": "accept"}})),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        let diff = delta["diff"].as_array().unwrap();
        assert!(!diff.is_empty());
        assert!(diff.iter().all(|d| d["new"]["status"] == "confirmed"));
    }
}

#[tokio::test]
async fn invalid_edit_and_unknown_event_change_nothing() {
    let f = fixture(EngineConfig::default());
    let id = create(&f.app).await;
    let e = &f.events[0];
    add_event(&f.app, &id, e).await;
    // grasp cannot take the knob
    let (status, _) = call(
        &f.app,
        "POST",
        &format!("/v1/sessions/{id}/events/0/edit"),
        Some(json!({"values": [{"field": "v", "value": {"verb": 2}}]})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (_, before) = call(&f.app, "GET", &format!("/v1/sessions/{id}/state"), None).await;
    let (status, body) = call(
        &f.app,
        "POST",
        &format!("/v1/sessions/{id}/events/0/edit"),
        Some(json!({"values": [{"field": "n", "value": {"noun": {"noun": 3}}}]})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    assert_eq!(body["code"], "ontology_violation");
    let (status, body) = call(
        &f.app,
        "POST",
        &format!("/v1/sessions/{id}/events/9/confirm"),
        Some(json!({"fields": ["t_s"]})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND, "{body}");
    let (_, after) = call(&f.app, "GET", &format!("/v1/sessions/{id}/state"), None).await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn full_clip_saves_and_exports() {
    let f = fixture(EngineConfig::default());
    let id = create(&f.app).await;
    let (status, body) = call(&f.app, "POST", &format!("/v1/sessions/{id}/save"), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["events"], json!([]));

    let f = fixture(EngineConfig::default());
    let id = create(&f.app).await;
    let e = &f.events[0];
    add_event(&f.app, &id, e).await;
    let (status, body) = call(&f.app, "POST", &format!("/v1/sessions/{id}/save"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "validation_failed");
    assert_eq!(body["details"][0]["event"], 0);

    resolve(&f.app, &id, e).await;
    for e in &f.events[1..] {
        add_event(&f.app, &id, e).await;
        resolve(&f.app, &id, e).await;
    }
    let (status, first) = call(&f.app, "POST", &format!("/v1/sessions/{id}/save"), None).await;
    assert_eq!(status, StatusCode::OK, "{first}");
    let (_, second) = call(&f.app, "POST", &format!("/v1/sessions/{id}/save"), None).await;
    assert_eq!(first, second);
    assert_eq!(first["metrics"]["accuracy"]["complete_match_rate"], 1.0);
    assert_eq!(first["events"], serde_json::to_value(&f.events).unwrap());

    let (status, log) = call(&f.app, "GET", &format!("/v1/sessions/{id}/log"), None).await;
    assert_eq!(status, StatusCode::OK);
    let lines: Vec<Value> = log
        .as_str()
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len() as u64, first["steps"].as_u64().unwrap());

    let (_, metrics) = call(&f.app, "GET", &format!("/v1/sessions/{id}/metrics"), None).await;
    assert_eq!(metrics["version"], 1);
    assert_eq!(metrics["behavior"]["confirmed_field_violations"], 0);
    let (status, csv) = call(&f.app, "GET", &format!("/v1/sessions/{id}/metrics?format=csv"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(csv.as_str().unwrap().starts_with("metric,value"));
    let (status, _) = call(&f.app, "GET", &format!("/v1/sessions/{id}/metrics?format=xml"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn a_restarted_server_replays_sessions_from_disk() {
    let f = fixture(EngineConfig::default());
    let id = create(&f.app).await;
    for e in &f.events[..3] {
        add_event(&f.app, &id, e).await;
        resolve(&f.app, &id, e).await;
    }
    add_event(&f.app, &id, &f.events[3]).await;
    let (_, mut before) = call(&f.app, "GET", &format!("/v1/sessions/{id}/state"), None).await;
    before["outstanding"] = json!({});

    let restarted = router(AppState::new(f.root.clone(), EngineConfig::default()));
    let (status, after) = call(&restarted, "GET", &format!("/v1/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(before, after);
    resolve(&restarted, &id, &f.events[3]).await;
}

#[tokio::test]
async fn same_session_mutations_are_serialized() {
    let f = fixture(EngineConfig::default());
    let id = create(&f.app).await;
    let mut tasks = Vec::new();
    for e in f.events.clone() {
        let app = f.app.clone();
        let id = id.clone();
        tasks.push(tokio::spawn(async move { add_event(&app, &id, &e).await }));
    }
    let mut steps = Vec::new();
    for t in tasks {
        steps.push(t.await.unwrap()["step"].as_u64().unwrap());
    }
    steps.sort();
    assert_eq!(steps, (0..f.events.len() as u64).collect::<Vec<_>>());
    let (_, view) = call(&f.app, "GET", &format!("/v1/sessions/{id}/state"), None).await;
    assert_eq!(view["events"].as_array().unwrap().len(), f.events.len());
    assert_eq!(view["steps"], f.events.len());
}

async fn next_frame(body: &mut Body) -> String {
    let frame = tokio::time::timeout(Duration::from_secs(5), body.frame())
        .await
        .expect("push message in time")
        .unwrap()
        .unwrap();
    String::from_utf8(frame.into_data().unwrap().to_vec()).unwrap()
}

#[tokio::test]
async fn push_stream_carries_deltas_and_interventions() {
    let f = fixture(EngineConfig::default());
    let id = create(&f.app).await;
    let resp = f
        .app
        .clone()
        .oneshot(
            Request::builder()
                .uri(format!("/v1/sessions/{id}/stream"))
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let mut body = resp.into_body();

    let e = &f.events[0];
    let delta = add_event(&f.app, &id, e).await;
    let frame = next_frame(&mut body).await;
    assert!(frame.starts_with("event: delta\n"), "{frame}");
    let data: Value = serde_json::from_str(frame.lines().nth(1).unwrap().strip_prefix("data: ").unwrap()).unwrap();
    assert_eq!(data["type"], "delta");
    assert_eq!(data["state_hash"], delta["state_hash"]);

    let (_, next) = call(&f.app, "POST", &format!("/v1/sessions/{id}/next"), Some(json!({"hand": hand_name(e)}))).await;
    let frame = next_frame(&mut body).await;
    assert!(frame.starts_with("event: intervention\n"), "{frame}");
    let data: Value = serde_json::from_str(frame.lines().nth(1).unwrap().strip_prefix("data: ").unwrap()).unwrap();
    let issued = if next["status"] == "applied" { &next["intervention"] } else { &next };
    assert_eq!(data["id"], issued["id"]);
}

#[tokio::test]
async fn activate_switches_the_active_event() {
    let f = fixture(EngineConfig::default());
    let id = create(&f.app).await;
    add_event(&f.app, &id, &f.events[0]).await;
    add_event(&f.app, &id, &f.events[1]).await;
    let (status, view) = call(&f.app, "POST", &format!("/v1/sessions/{id}/events/0/activate"), None).await;
    assert_eq!(status, StatusCode::OK);
    let active: Vec<bool> = view["events"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["active"].as_bool().unwrap())
        .collect();
    let same_hand = f.events[0].hand == f.events[1].hand;
    assert_eq!(active, vec![true, !same_hand]);
}
