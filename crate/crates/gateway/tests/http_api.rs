use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use llmchain_core::backends::{BackendScript, InteractionTrace};
use llmchain_core::ledger::encode_log;
use llmchain_core::scenario::{run_scenario_with, start_session, user_pubkey, Action, Scenario, ScheduledEvent};
use llmchain_core::store::Cid;
use llmchain_gateway::http::{router, SharedSession, PUBKEY_HEADER};

fn traces() -> Vec<InteractionTrace> {
    (0..4)
        .map(|i| InteractionTrace {
            question_id: format!("q{i}"),
            context: "general".into(),
            question: format!("what is item {i}?"),
            ground_truth: Some(format!("item {i} is a small red box")),
            answers: [
                ("alpha", format!("item {i} is a small red box")),
                ("beta", format!("item {i} is a box")),
                ("gamma", "no idea".to_string()),
            ]
            .into_iter()
            .map(|(m, a)| (m.to_string(), a))
            .collect(),
        })
        .collect()
}

fn scenario(users: &[&str]) -> Scenario {
    Scenario {
        seed: 0,
        dataset: PathBuf::from("unused"),
        hyperparams: Default::default(),
        oracle: Default::default(),
        backends: ["alpha", "beta", "gamma"]
            .iter()
            .map(|m| BackendScript::always_online(m))
            .collect(),
        users: users.iter().map(|u| u.to_string()).collect(),
        schedule: vec![],
        feedback_policy: None,
    }
}

fn app() -> (Router, SharedSession) {
    let (session, _) = start_session(&scenario(&[]), traces()).unwrap();
    let shared = Arc::new(Mutex::new(session));
    (router(shared.clone()), shared)
}

async fn call(app: &Router, method: &str, uri: &str, key: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(k) = key {
        req = req.header(PUBKEY_HEADER, hex::encode(k));
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

async fn register(app: &Router, key: &str, role: &str) {
    let (st, _) = call(app, "POST", "/register", None, Some(json!({"pubkey": hex::encode(key), "role": role}))).await;
    assert_eq!(st, StatusCode::OK);
}

#[tokio::test]
async fn fresh_models_sit_at_bootstrap_reputation() {
    let (app, _) = app();
    let (st, models) = call(&app, "GET", "/models", None, None).await;
    assert_eq!(st, StatusCode::OK);
    let models = models.as_array().unwrap();
    assert_eq!(models.len(), 3);
    for m in models {
        for k in ["r_auto", "r_human", "r_weighted"] {
            assert_eq!(m[k], 0.5);
        }
    }
}

#[tokio::test]
async fn user_cannot_add_models() {
    let (app, _) = app();
    register(&app, "carol", "user").await;
    let (st, _) = call(
        &app,
        "POST",
        "/models",
        Some("carol"),
        Some(json!({"details": {"name": "x", "version": "1", "description": "", "endpoint": "", "context_tags": []}})),
    )
    .await;
    assert_eq!(st, StatusCode::FORBIDDEN);

    register(&app, "dora", "developer").await;
    let (st, body) = call(
        &app,
        "POST",
        "/models",
        Some("dora"),
        Some(json!({"details": {"name": "delta", "version": "1", "description": "", "endpoint": "", "context_tags": []}})),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(body["model_id"], 3);
}

#[tokio::test]
async fn same_minute_feedback_has_no_effect() {
    let (app, _) = app();
    register(&app, "carol", "user").await;
    let (st, p) = call(
        &app,
        "POST",
        "/prompt",
        Some("carol"),
        Some(json!({"model_id": 0, "question_id": "q1", "at_time": 10})),
    )
    .await;
    assert_eq!(st, StatusCode::OK, "{p}");
    let fb = json!({
        "model_id": 0,
        "constructs": {"a_trust": 5, "a_complete": 5, "a_utility": 4, "familiarity": 4, "llm_trust": 5, "uncertainty": 1},
        "record_cid": p["record_cid"],
        "at_time": 20,
    });
    let (st, first) = call(&app, "POST", "/feedback", Some("carol"), Some(fb.clone())).await;
    assert_eq!(st, StatusCode::OK, "{first}");
    assert!(first["w_h"].as_f64().unwrap() > 0.0);
    let (st, second) = call(&app, "POST", "/feedback", Some("carol"), Some(fb)).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(second["w_h"], 0.0);
    assert_eq!(second["duration_minutes"], 0.0);
    assert_eq!(first["r_human"], second["r_human"]);
    assert_eq!(first["r_weighted"], second["r_weighted"]);
}

#[tokio::test]
async fn records_are_served_by_cid() {
    let (app, shared) = app();
    register(&app, "carol", "user").await;
    let (_, p) = call(&app, "POST", "/prompt", Some("carol"), Some(json!({"model_id": 1, "text": "what is item 2?"}))).await;
    let cid = p["record_cid"].as_str().unwrap().to_string();
    let (st, rec) = call(&app, "GET", &format!("/records/{cid}"), None, None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(rec["target_answer"], "item 2 is a box");
    let bytes = shared.lock().unwrap().ledger().store().get_bytes(&cid.parse().unwrap()).unwrap();
    assert_eq!(Cid::of_bytes(&bytes).to_hex(), cid);

    let (st, _) = call(&app, "GET", &format!("/records/{}", "ab".repeat(32)), None, None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "GET", "/records/not-hex", None, None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn validation_and_lookup_errors() {
    let (app, _) = app();
    register(&app, "carol", "user").await;
    let (st, _) = call(&app, "POST", "/prompt", Some("carol"), Some(json!({"model_id": 42, "question_id": "q0"}))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "POST", "/prompt", None, Some(json!({"model_id": 0, "question_id": "q0"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = call(&app, "POST", "/prompt", Some("carol"), Some(json!({"model_id": 0}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = call(&app, "POST", "/prompt", Some("carol"), Some(json!({"model_id": 0, "text": "unknown prompt"}))).await;
    assert_eq!(st, StatusCode::NOT_FOUND, "no fallback answer");
    let (_, p) = call(&app, "POST", "/prompt", Some("carol"), Some(json!({"model_id": 0, "question_id": "q0"}))).await;
    let bad = json!({
        "model_id": 0,
        "constructs": {"a_trust": 6, "a_complete": 5, "a_utility": 4, "familiarity": 4, "llm_trust": 5, "uncertainty": 1},
        "record_cid": p["record_cid"],
    });
    let (st, _) = call(&app, "POST", "/feedback", Some("carol"), Some(bad)).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    // an unregistered key may not prompt
    let (st, _) = call(&app, "POST", "/prompt", Some("mallory"), Some(json!({"model_id": 0, "question_id": "q0"}))).await;
    assert_eq!(st, StatusCode::FORBIDDEN);
    // duplicate registration
    let (st, _) = call(&app, "POST", "/register", None, Some(json!({"pubkey": hex::encode("carol"), "role": "user"}))).await;
    assert_eq!(st, StatusCode::CONFLICT);
}

#[tokio::test]
async fn http_and_replay_produce_identical_transactions() {
    let users = ["alice", "bob"];
    let mut sc = scenario(&users);
    let likert = [5, 4, 4, 3, 4, 2];
    for (i, (user, model, q)) in [("alice", "beta", "q0"), ("bob", "gamma", "q1"), ("alice", "alpha", "q2")]
        .into_iter()
        .enumerate()
    {
        let t = 10 * (i as u64 + 1);
        sc.schedule.push(ScheduledEvent {
            at_time: t,
            user: user.into(),
            action: Action::Prompt {
                model: model.into(),
                question_id: Some(q.into()),
                text: None,
            },
        });
        sc.schedule.push(ScheduledEvent {
            at_time: t + 2,
            user: user.into(),
            action: Action::HumanFeedback {
                model: model.into(),
                likert,
            },
        });
    }
    let replay = run_scenario_with(&sc, traces()).unwrap();

    let (session, _) = start_session(&scenario(&[]), traces()).unwrap();
    let shared = Arc::new(Mutex::new(session));
    let app = router(shared.clone());
    for u in users {
        let key = String::from_utf8(user_pubkey(u)).unwrap();
        let (st, _) = call(
            &app,
            "POST",
            "/register",
            None,
            Some(json!({"pubkey": hex::encode(&key), "role": "user", "at_time": 0})),
        )
        .await;
        assert_eq!(st, StatusCode::OK);
    }
    let ids = |m: &str| ["alpha", "beta", "gamma"].iter().position(|x| *x == m).unwrap();
    for pair in sc.schedule.chunks(2) {
        let Action::Prompt { model, question_id, .. } = &pair[0].action else { unreachable!() };
        let key = String::from_utf8(user_pubkey(&pair[0].user)).unwrap();
        let (st, p) = call(
            &app,
            "POST",
            "/prompt",
            Some(&key),
            Some(json!({"model_id": ids(model), "question_id": question_id, "at_time": pair[0].at_time})),
        )
        .await;
        assert_eq!(st, StatusCode::OK);
        let (st, _) = call(
            &app,
            "POST",
            "/feedback",
            Some(&key),
            Some(json!({
                "model_id": ids(model),
                "constructs": {"a_trust": 5, "a_complete": 4, "a_utility": 4, "familiarity": 3, "llm_trust": 4, "uncertainty": 2},
                "record_cid": p["record_cid"],
                "at_time": pair[1].at_time,
            })),
        )
        .await;
        assert_eq!(st, StatusCode::OK);
    }
    let served = shared.lock().unwrap();
    assert_eq!(encode_log(served.ledger().log()), encode_log(replay.ledger.log()));
    assert_eq!(served.ledger().state().state_root, replay.ledger.state().state_root);
}
