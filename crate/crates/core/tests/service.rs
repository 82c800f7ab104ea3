use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use maya::augment::synth;
use maya::fer::build_maya_net;
use maya::service::{router, ApiConfig, AppState};
use maya::sessions::simulate::next_command;
use maya::sessions::{LogicalClock, RecordingDriver, RobotActionKind};

fn state(dir: &std::path::Path, max: usize) -> (Arc<AppState>, Arc<RecordingDriver>) {
    let driver = Arc::new(RecordingDriver::default());
    let cfg = ApiConfig {
        data_dir: dir.to_path_buf(),
        max_sessions: max,
        ..ApiConfig::default()
    };
    let st = AppState::new(&cfg, Arc::new(LogicalClock::default()), driver.clone()).unwrap();
    (Arc::new(st), driver)
}

async fn call(st: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, text) = call_raw(st, method, uri, body.map(|b| b.to_string())).await;
    let v = serde_json::from_str(&text).unwrap_or(Value::String(text));
    (status, v)
}

async fn call_raw(st: &Arc<AppState>, method: &str, uri: &str, body: Option<String>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = router(st.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn new_game(st: &Arc<AppState>, seed: u64) -> String {
    let (status, v) = call(st, "POST", "/v1/sessions", Some(json!({"kind": "game", "config": {"seed": seed}}))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

async fn play_out(st: &Arc<AppState>, id: &str, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let cmd = {
            let slot = st.store.get(id).unwrap();
            let s = slot.session.lock().await;
            next_command(&s, &mut rng)
        };
        let Some(cmd) = cmd else { break };
        let (status, v) = call(st, "POST", &format!("/v1/sessions/{id}/commands"), Some(json!(cmd))).await;
        assert_eq!(status, StatusCode::OK, "{v}");
    }
}

#[tokio::test]
async fn create_rejects_bad_config_and_enforces_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let (st, _) = state(dir.path(), 2);
    let (status, v) = call(
        &st,
        "POST",
        "/v1/sessions",
        Some(json!({"kind": "game", "config": {"board": {"ladders": [[5, 2]]}}})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");
    assert_eq!(v["error"]["code"], "invalid_config");
    let (status, _) = call_raw(&st, "POST", "/v1/sessions", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    new_game(&st, 1).await;
    new_game(&st, 2).await;
    let (status, v) = call(&st, "POST", "/v1/sessions", Some(json!({"kind": "game"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "capacity");
    let (status, v) = call(&st, "GET", "/v1/sessions", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 2);
    let (status, _) = call(&st, "GET", "/v1/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn commands_out_of_phase_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let (st, driver) = state(dir.path(), 8);
    let id = new_game(&st, 3).await;
    let uri = format!("/v1/sessions/{id}/commands");
    let (status, v) = call(&st, "POST", &uri, Some(json!({"command": "roll"}))).await;
    assert_eq!(status, StatusCode::CONFLICT, "{v}");
    assert_eq!(v["error"]["code"], "phase");
    assert_eq!(v["phase"], "awaiting_neutral_calibration");

    let (status, v) = call(&st, "POST", &uri, Some(json!({"command": "calibrate"}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let (status, v) = call(&st, "POST", &uri, Some(json!({"command": "roll"}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["events"][0]["kind"], "dice_rolled");
    assert_eq!(v["seq"], v["events"].as_array().unwrap().last().unwrap()["seq"]);

    let (status, v) = call(&st, "POST", &uri, Some(json!({"command": "resolve_expression", "payload": {"probs": "x"}}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    let (status, _) = call(&st, "POST", &uri, Some(json!({"command": "teleport"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let kinds: Vec<RobotActionKind> = driver.actions().iter().map(|a| a.1.kind).collect();
    assert_eq!(&kinds[..2], &[RobotActionKind::Greet, RobotActionKind::AskName]);
}

#[tokio::test]
async fn pain_session_rejects_out_of_range_scores() {
    let dir = tempfile::tempdir().unwrap();
    let (st, _) = state(dir.path(), 8);
    let (status, v) = call(&st, "POST", "/v1/sessions", Some(json!({"kind": "pain", "config": {"participants": 4, "seed": 2}}))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    let id = v["session_id"].as_str().unwrap();
    let uri = format!("/v1/sessions/{id}/commands");
    let rec = |score| json!({"command": "record_pain", "payload": {"participant_id": "p1", "mode": "A_no_robot", "score": score}});
    let (status, v) = call(&st, "POST", &uri, Some(rec(11))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert_eq!(v["error"]["code"], "score_range");
    let (status, _) = call(&st, "POST", &uri, Some(rec(7))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, v) = call(&st, "POST", &uri, Some(rec(6))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "duplicate_record");
    let (_, snap) = call(&st, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(snap["first_modes"].as_array().unwrap().len(), 4);
}

#[tokio::test]
async fn stream_replays_finished_session_and_closes() {
    let dir = tempfile::tempdir().unwrap();
    let (st, _) = state(dir.path(), 8);
    let id = new_game(&st, 11).await;
    play_out(&st, &id, 5).await;
    let (_, snap) = call(&st, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(snap["status"], "finished");
    let last = snap["last_seq"].as_u64().unwrap();

    let (status, body) = call_raw(&st, "GET", &format!("/v1/sessions/{id}/stream"), None).await;
    assert_eq!(status, StatusCode::OK);
    let data: Vec<Value> = body
        .lines()
        .filter_map(|l| l.strip_prefix("data: "))
        .map(|d| serde_json::from_str(d).unwrap())
        .collect();
    assert_eq!(data.len() as u64, last);
    for (i, e) in data.iter().enumerate() {
        assert_eq!(e["seq"], i as u64 + 1);
    }
    assert_eq!(data.last().unwrap()["kind"], "session_finished");
    let ids: Vec<&str> = body.lines().filter_map(|l| l.strip_prefix("id: ")).collect();
    assert_eq!(ids.first(), Some(&"1"));

    let (_, tail) = call_raw(&st, "GET", &format!("/v1/sessions/{id}/stream?from={last}"), None).await;
    assert_eq!(tail.lines().filter(|l| l.starts_with("data: ")).count(), 1);
}

#[tokio::test]
async fn stream_follows_live_commands() {
    let dir = tempfile::tempdir().unwrap();
    let (st, _) = state(dir.path(), 8);
    let id = new_game(&st, 12).await;
    let reader = {
        let st = st.clone();
        let id = id.clone();
        tokio::spawn(async move { call_raw(&st, "GET", &format!("/v1/sessions/{id}/stream"), None).await })
    };
    tokio::task::yield_now().await;
    play_out(&st, &id, 6).await;
    let (_, body) = tokio::time::timeout(std::time::Duration::from_secs(30), reader).await.unwrap().unwrap();
    let seqs: Vec<u64> = body
        .lines()
        .filter_map(|l| l.strip_prefix("id: "))
        .map(|s| s.parse().unwrap())
        .collect();
    let last = st.store.get(&id).unwrap().session.lock().await.last_seq();
    assert_eq!(seqs, (1..=last).collect::<Vec<_>>());
}

#[tokio::test]
async fn restart_replays_to_identical_state() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, snaps) = {
        let (st, _) = state(dir.path(), 8);
        let a = new_game(&st, 21).await;
        play_out(&st, &a, 1).await;
        let b = new_game(&st, 22).await;
        let uri = format!("/v1/sessions/{b}/commands");
        call(&st, "POST", &uri, Some(json!({"command": "calibrate"}))).await;
        call(&st, "POST", &uri, Some(json!({"command": "roll"}))).await;
        let (_, snaps) = call(&st, "GET", "/v1/sessions", None).await;
        let mut full = vec![snaps];
        for id in [&a, &b] {
            full.push(call(&st, "GET", &format!("/v1/sessions/{id}"), None).await.1);
        }
        (a, b, full)
    };
    let (st, _) = state(dir.path(), 8);
    let (_, list) = call(&st, "GET", "/v1/sessions", None).await;
    assert_eq!(list, snaps[0]);
    for (k, id) in [&a, &b].into_iter().enumerate() {
        let (_, snap) = call(&st, "GET", &format!("/v1/sessions/{id}"), None).await;
        assert_eq!(snap, snaps[k + 1]);
    }
    // The replayed game keeps playing from the same dice stream.
    let (status, v) = call(&st, "POST", &format!("/v1/sessions/{b}/commands"), Some(json!({"command": "roll"}))).await;
    assert_eq!(status, StatusCode::CONFLICT, "{v}");
}

#[tokio::test]
async fn predict_matches_library_and_needs_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let (st, _) = state(dir.path(), 8);
    let face = synth::synth_corpus(1, 4).remove(0);
    let body = json!({ "points": face.points });
    let (status, v) = call(&st, "POST", "/v1/fer/predict", Some(body.clone())).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["error"]["code"], "model_not_loaded");

    let model = build_maya_net(9);
    let direct = model.predict(&face).unwrap();
    let st = {
        let (s, _) = state(dir.path(), 8);
        Arc::new(Arc::try_unwrap(s).ok().unwrap().with_model(model))
    };
    let (status, v) = call(&st, "POST", "/v1/fer/predict", Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let probs: Vec<f64> = serde_json::from_value(v["probs"].clone()).unwrap();
    assert_eq!(probs, direct.probs);
    assert_eq!(v["top"], json!(direct.top));

    let (status, v) = call(&st, "POST", "/v1/fer/predict", Some(json!({"points": [[0.0, 0.0]]}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "invalid_landmarks");

    let (status, v) = call(&st, "POST", "/v1/identity/enroll", Some(json!({"name": "ana", "points": face.points}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let (status, v) = call(&st, "POST", "/v1/identity/identify", Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["match"]["person_id"], json!(1));

    let (_, h) = call(&st, "GET", "/v1/healthz", None).await;
    assert_eq!(h["status"], "ok");
    assert_eq!(h["model_sha256"].as_str().unwrap().len(), 64);
}

#[tokio::test]
async fn stats_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let (st, _) = state(dir.path(), 8);
    let mut records = Vec::new();
    for (i, (a, b)) in [(8, 4), (9, 5), (9, 4), (8, 5), (9, 6)].into_iter().enumerate() {
        records.push(json!({"participant_id": format!("c{i}"), "mode": "A", "score": a}));
        records.push(json!({"participant_id": format!("c{i}"), "mode": "B", "score": b}));
    }
    let (status, v) = call(&st, "POST", "/v1/stats/pain", Some(json!({ "records": records }))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["report"]["n"], 5);
    assert!(v["text"].as_str().unwrap().contains("mean 8.60"));

    let same: Vec<Value> = (0..3)
        .flat_map(|i| {
            ["A", "B"].map(|m| json!({"participant_id": format!("c{i}"), "mode": m, "score": if m == "A" { 8 } else { 4 }}))
        })
        .collect();
    let (status, v) = call(&st, "POST", "/v1/stats/pain", Some(json!({ "records": same }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "degenerate_variance");
    assert_eq!(v["report"]["n"], 3);

    let resp = |id: &str, group: &str, base: u8| {
        json!({"respondent_id": id, "group": group, "answers": (0..43).map(|q| 1 + (base + q as u8) % 5).collect::<Vec<_>>()})
    };
    let responses = vec![resp("k1", "child", 0), resp("k2", "child", 1), resp("k3", "child", 3), resp("p1", "parent", 2), resp("p2", "parent", 4)];
    let (status, v) = call(&st, "POST", "/v1/stats/utaut", Some(json!({ "responses": responses.clone() }))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["scores"].as_array().unwrap().len(), 5);
    assert_eq!(v["questions"]["rows"].as_array().unwrap().len(), 6);

    let mut bad = responses;
    bad[1]["answers"][3] = json!(9);
    let (status, v) = call(&st, "POST", "/v1/stats/utaut", Some(json!({ "responses": bad }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"]["message"].as_str().unwrap().contains("k2"), "{v}");
}
