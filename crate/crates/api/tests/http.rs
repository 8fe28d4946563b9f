use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use segrate_api::{router, AppState, ServerConfig, TOKEN_HEADER};
use segrate_core::scenario::{self, NARRATIVE_CSV};
use segrate_core::{CameraView, Catalog, EventAction, EventDraft, RatingForm, SegmentSlot};

const SEG: &str = "tok-seg1";
const CLIN1: &str = "tok-clin1";
const CLIN2: &str = "tok-clin2";

fn tokens() -> BTreeMap<String, String> {
    [
        ("tok-seg1", "seg1"),
        ("tok-seg2", "seg2"),
        ("tok-clin1", "clin1"),
        ("tok-clin2", "clin2"),
        ("tok-clin3", "clin3"),
    ]
    .into_iter()
    .map(|(t, a)| (t.to_string(), a.to_string()))
    .collect()
}

fn raters() -> Vec<String> {
    vec!["clin1".into(), "clin2".into(), "clin3".into()]
}

fn app() -> Router {
    router(AppState::in_memory(
        Arc::new(Catalog::default_catalog()),
        RatingForm::default(),
        2,
        raters(),
        tokens(),
    ))
}

async fn call(
    app: &Router,
    method: Method,
    uri: &str,
    token: Option<&str>,
    body: Option<Value>,
) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(TOKEN_HEADER, t);
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
    let bytes = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, bytes)
}

async fn get(app: &Router, uri: &str, token: &str) -> (StatusCode, Value) {
    let (s, b) = call(app, Method::GET, uri, Some(token), None).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn post(app: &Router, uri: &str, token: &str, body: Value) -> (StatusCode, Value) {
    let (s, b) = call(app, Method::POST, uri, Some(token), Some(body)).await;
    (s, serde_json::from_slice(&b).unwrap())
}

fn frames(stream: &Value, slot: &str) -> (Value, Value, bool) {
    let r = stream["records"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["slot"] == slot)
        .unwrap();
    (
        r["start_frame"].clone(),
        r["end_frame"].clone(),
        r["confirmed"].as_bool().unwrap(),
    )
}

#[tokio::test]
async fn health_counts_events_without_token() {
    let app = app();
    let (s, b) = call(&app, Method::GET, "/health", None, None).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v, json!({"store": "ok", "catalog": "v1", "events": 0}));

    let six: Vec<_> = scenario::narrative().into_iter().take(6).collect();
    let (s, _) = post(&app, "/events", SEG, json!(six)).await;
    assert_eq!(s, StatusCode::CREATED);
    let (_, b) = call(&app, Method::GET, "/health", None, None).await;
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["events"], 6);
}

#[tokio::test]
async fn health_reports_missing_store() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let state = AppState::open(&ServerConfig::new(&data)).unwrap();
    let app = router(state);
    let (s, _) = call(&app, Method::GET, "/health", None, None).await;
    assert_eq!(s, StatusCode::OK);
    std::fs::remove_dir_all(&data).unwrap();
    let (s, b) = call(&app, Method::GET, "/health", None, None).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["store"], "failed");
}

#[tokio::test]
async fn token_required() {
    let app = app();
    let (s, b) = call(&app, Method::GET, "/catalog/tasks", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["machine_code"], "unauthorized");
    assert_eq!(v["http_status"], 401);
    let (s, _) = call(&app, Method::GET, "/catalog/tasks", Some("nope"), None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn catalog_task_matches_in_process_sequence() {
    let app = app();
    let catalog = Catalog::default_catalog();
    let (s, v) = get(&app, "/catalog/tasks/1", SEG).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["sequence"], json!(catalog.expected_sequence(1).unwrap()));
    assert_eq!(
        v["recommended_view"],
        json!(catalog.task(1).unwrap().recommended_view)
    );
    assert!(v["definitions"]["IP"]
        .as_str()
        .is_some_and(|d| !d.is_empty()));

    let (_, all) = get(&app, "/catalog/tasks", SEG).await;
    assert_eq!(all["tasks"].as_array().unwrap().len(), 19);

    let (s, v) = get(&app, "/catalog/tasks/20", SEG).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["machine_code"], "unknown_task");
}

#[tokio::test]
async fn correction_without_input_is_422() {
    let app = app();
    let body = json!({
        "patient_id": "1", "hand": "right", "task_number": 1, "slot": "IP",
        "action": "CorrectStartFrame", "camera": "Ipsilateral", "frame_value": 80
    });
    let (s, v) = post(&app, "/events", SEG, body).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["machine_code"], "correction_without_input");
    assert_eq!(v["http_status"], 422);
    assert!(v["human_message"].as_str().is_some());
}

#[tokio::test]
async fn narrative_segments_and_flat_export() {
    let app = app();
    let (s, v) = post(&app, "/events", SEG, json!(narrative())).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["events"].as_array().unwrap().len(), 8);

    let (s, v) = get(&app, "/segments?patient=1&task=1", SEG).await;
    assert_eq!(s, StatusCode::OK);
    let streams = v["streams"].as_array().unwrap();
    assert_eq!(streams.len(), 1);
    assert_eq!(frames(&streams[0], "IP"), (json!(75), json!(92), true));
    assert_eq!(frames(&streams[0], "T"), (json!(92), json!(111), true));
    assert!(streams[0]["overlaps"].as_array().unwrap().is_empty());

    let (s, csv) = call(
        &app,
        Method::GET,
        "/export/flat?patient=1&task=1",
        Some(SEG),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(String::from_utf8(csv).unwrap(), NARRATIVE_CSV);
}

#[tokio::test]
async fn actor_comes_from_token() {
    let app = app();
    let (s, v) = post(&app, "/events", "tok-seg2", json!(scenario::narrative())).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    assert_eq!(v["machine_code"], "actor_mismatch");

    let body = json!({"patient_id": "7", "hand": "left", "task_number": 2, "slot": "IP",
        "action": "SelectCamera", "camera": "Back"});
    let (s, v) = post(&app, "/events", "tok-seg2", body).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["events"][0]["actor_id"], "seg2");
    assert!(v["events"][0]["timestamp_ms"].as_i64().unwrap() > 0);
}

#[tokio::test]
async fn stale_stream_length_is_409() {
    let app = app();
    let ev = json!({"patient_id": "1", "hand": "right", "task_number": 1, "slot": "IP",
        "action": "SelectCamera", "camera": "Ipsilateral"});
    let (s, _) = post(
        &app,
        "/events",
        SEG,
        json!({"events": [ev], "expected_stream_len": 0}),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, v) = post(
        &app,
        "/events",
        SEG,
        json!({"events": [ev], "expected_stream_len": 0}),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["machine_code"], "stream_conflict");
    let (s, _) = post(
        &app,
        "/events",
        SEG,
        json!({"events": [ev], "expected_stream_len": 1}),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
}

#[tokio::test]
async fn timestamps_may_not_regress() {
    let app = app();
    let mk = |ts: i64| {
        json!({"patient_id": "1", "hand": "right", "task_number": 1, "slot": "IP",
        "action": "PlaybackCheck", "timestamp_ms": ts})
    };
    assert_eq!(
        post(&app, "/events", SEG, mk(2000)).await.0,
        StatusCode::CREATED
    );
    let (s, v) = post(&app, "/events", SEG, mk(1000)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["machine_code"], "timestamp_regression");
}

#[tokio::test]
async fn malformed_bodies_are_400_json() {
    let app = app();
    let (s, b) = call(
        &app,
        Method::POST,
        "/events",
        Some(SEG),
        Some(json!({"bogus": 1})),
    )
    .await;
    assert!(s.is_client_error());
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["http_status"], s.as_u16());
    let (s, v) = get(&app, "/segments?patient=1", SEG).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["machine_code"], "bad_request");
}

fn narrative() -> Vec<EventDraft> {
    let mut evs = scenario::narrative();
    assert_eq!(evs.pop().unwrap().action, EventAction::SubmitTask);
    evs
}

/// The narrative plus the remaining task 1 slots, optionally leaving the last one unconfirmed.
fn full_task1(confirm_last: bool) -> Vec<EventDraft> {
    let mut evs = narrative();
    let key = scenario::narrative_stream();
    let mut at = evs.last().unwrap().timestamp_ms;
    for (i, slot) in ["MTR", "PR", "MTR2"].into_iter().enumerate() {
        let slot: SegmentSlot = slot.parse().unwrap();
        let (a, b) = (111 + 20 * i as u32, 131 + 20 * i as u32);
        at = at.plus_ms(1000);
        evs.push(
            EventDraft::new(&key, at, slot, EventAction::SetStartFrame)
                .camera(CameraView::Contralateral)
                .frame(a),
        );
        evs.push(
            EventDraft::new(&key, at, slot, EventAction::SetEndFrame)
                .camera(CameraView::Contralateral)
                .frame(b),
        );
        if confirm_last || i < 2 {
            evs.push(EventDraft::new(&key, at, slot, EventAction::ConfirmSegment));
        }
    }
    evs
}

fn submit() -> Value {
    json!({"patient_id": "1", "hand": "left", "task_number": 1, "slot": "IP", "action": "SubmitTask"})
}

#[tokio::test]
async fn submission_gate_then_rating_round() {
    let app = app();
    let (s, _) = post(&app, "/events", SEG, json!(full_task1(false))).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, v) = post(&app, "/events", SEG, submit()).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["machine_code"], "submission_invalid");
    assert_eq!(v["details"]["errors"][0]["rule"], "unconfirmed");

    let video = json!({"patient_id": "1", "hand": "left", "task_number": 1});
    let (s, v) = post(&app, "/ratings/assign", CLIN1, video.clone()).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["machine_code"], "not_ratable");

    let confirm = json!({"patient_id": "1", "hand": "left", "task_number": 1, "slot": "MTR2", "action": "ConfirmSegment"});
    assert_eq!(
        post(&app, "/events", SEG, json!([confirm, submit()]))
            .await
            .0,
        StatusCode::CREATED
    );

    let (s, v) = post(&app, "/ratings/assign", CLIN1, video.clone()).await;
    assert_eq!(s, StatusCode::CREATED);
    let assigned: Vec<String> = v["assignments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["rater_id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(assigned, ["clin1", "clin2"]);
    let (s, v) = post(&app, "/ratings/assign", CLIN1, video.clone()).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["machine_code"], "already_assigned");

    let (_, mine) = get(&app, "/ratings/assignments", CLIN1).await;
    let id1 = mine["assignments"][0]["assignment_id"].clone();
    let (_, theirs) = get(&app, "/ratings/assignments", CLIN2).await;
    let id2 = theirs["assignments"][0]["assignment_id"].clone();

    let answers = json!({"segment_ip": 2, "segment_t": 3, "segment_mtr": 2, "segment_pr": 1});
    let (s, v) = post(
        &app,
        "/ratings",
        CLIN1,
        json!({"assignment_id": id1, "task_score": 4, "answers": answers}),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["machine_code"], "score_out_of_range");
    let (s, v) = post(
        &app,
        "/ratings",
        CLIN2,
        json!({"assignment_id": id1, "task_score": 2, "answers": answers}),
    )
    .await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    assert_eq!(v["machine_code"], "not_your_assignment");

    let (s, v) = post(
        &app,
        "/ratings",
        CLIN1,
        json!({"assignment_id": id1, "task_score": 2, "answers": answers}),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["outcome"]["fully_rated"], false);
    let (s, _) = post(
        &app,
        "/ratings",
        CLIN1,
        json!({"assignment_id": id1, "task_score": 2, "answers": answers}),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, v) = post(
        &app,
        "/ratings",
        CLIN2,
        json!({"assignment_id": id2, "task_score": 3, "answers": answers}),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["outcome"]["fully_rated"], true);

    let (_, p) = get(&app, "/ratings/progress", CLIN1).await;
    assert_eq!(p["videos_segmented"], 1);
    assert_eq!(p["videos_fully_rated"], 1);
    assert_eq!(p["percent_rated"], 100.0);

    let (s, csv) = call(&app, Method::GET, "/ratings/export", Some(CLIN1), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
}

#[tokio::test]
async fn flag_reopens_video_and_logs_feedback() {
    let app = app();
    let mut evs: Vec<Value> = full_task1(true).into_iter().map(|d| json!(d)).collect();
    evs.push(submit());
    assert_eq!(
        post(&app, "/events", SEG, json!(evs)).await.0,
        StatusCode::CREATED
    );
    let video = json!({"patient_id": "1", "hand": "left", "task_number": 1});
    assert_eq!(
        post(&app, "/ratings/assign", CLIN1, video.clone()).await.0,
        StatusCode::CREATED
    );
    let (_, mine) = get(&app, "/ratings/assignments", CLIN1).await;
    let id = mine["assignments"][0]["assignment_id"].clone();

    let (s, v) = post(
        &app,
        "/feedback",
        CLIN1,
        json!({"assignment_id": id, "text": "  "}),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["machine_code"], "feedback_required");

    let (s, v) = post(
        &app,
        "/feedback",
        CLIN1,
        json!({"assignment_id": id, "text": "T video is too long", "slot": "T"}),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["flag"]["segmentor_id"], "seg1");
    assert_eq!(v["feedback_event"]["action"], "FeedbackNote");
    assert_eq!(v["feedback_event"]["actor_id"], "clin1");

    let (_, q) = get(&app, "/ratings/queue", CLIN1).await;
    assert!(q["ratable"].as_array().unwrap().is_empty());
    let (_, mine) = get(&app, "/ratings/assignments", CLIN1).await;
    assert!(mine["assignments"].as_array().unwrap().is_empty());

    let (_, notes) = get(&app, "/events?actor=clin1", CLIN1).await;
    assert_eq!(notes["total"], 1);
    assert_eq!(notes["events"][0]["text"], "T video is too long");

    // The rater's note stream is not a segmentation.
    let (_, segs) = get(&app, "/segments?patient=1&task=1", SEG).await;
    assert_eq!(segs["streams"].as_array().unwrap().len(), 1);

    // Resubmitting the corrected segmentation reopens the video for a fresh round.
    assert_eq!(
        post(&app, "/events", SEG, submit()).await.0,
        StatusCode::CREATED
    );
    let (_, q) = get(&app, "/ratings/queue", CLIN1).await;
    assert_eq!(q["ratable"].as_array().unwrap().len(), 1);
    let (s, _) = post(&app, "/ratings/assign", CLIN1, video).await;
    assert_eq!(s, StatusCode::CREATED);
}

#[tokio::test]
async fn capture_session_gating_over_http() {
    let app = app();
    let (s, v) = post(
        &app,
        "/sessions",
        SEG,
        json!({"patient_id": "P9", "hand": "left", "date": "2024-03-01"}),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["phase"], "NeedsCalibration");
    let id = v["session_id"].as_str().unwrap().to_string();
    let url = |op: &str| format!("/sessions/{id}/{op}");

    let (s, v) = post(
        &app,
        &url("start-task"),
        SEG,
        json!({"task_number": 1, "at_ms": 1000}),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["machine_code"], "wrong_phase");
    let (s, v) = post(
        &app,
        &url("camera-check"),
        SEG,
        json!({"view": "Back", "status": "ok"}),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["machine_code"], "calibration_required");

    assert_eq!(
        post(
            &app,
            &url("calibrate"),
            SEG,
            json!({"calibration_ref": "cal-1"})
        )
        .await
        .0,
        StatusCode::OK
    );
    let mut last = Value::Null;
    for view in ["Ipsilateral", "Contralateral", "Transverse", "Back"] {
        let (s, v) = post(
            &app,
            &url("camera-check"),
            SEG,
            json!({"view": view, "status": "ok"}),
        )
        .await;
        assert_eq!(s, StatusCode::OK);
        last = v;
    }
    assert_eq!(last["phase"], "Administration");

    assert_eq!(
        post(
            &app,
            &url("start-task"),
            SEG,
            json!({"task_number": 3, "at_ms": 10_000})
        )
        .await
        .0,
        StatusCode::OK
    );
    let (s, v) = post(
        &app,
        &url("start-task"),
        SEG,
        json!({"task_number": 4, "at_ms": 11_000}),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["machine_code"], "recording_in_progress");
    let (s, v) = post(&app, &url("stop-task"), SEG, json!({"at_ms": 32_500})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["recording"]["timer_seconds"], 22.5);

    let (s, v) = post(
        &app,
        &url("preliminary"),
        SEG,
        json!({"task_number": 3, "score": 4}),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["machine_code"], "score_out_of_range");
    assert_eq!(
        post(
            &app,
            &url("preliminary"),
            SEG,
            json!({"task_number": 3, "score": 2, "note": "dropped block"})
        )
        .await
        .0,
        StatusCode::OK
    );

    let (s, v) = get(&app, "/patients/P9/tasks/3/videos", SEG).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["videos"].as_array().unwrap().len(), 4);

    assert_eq!(
        post(&app, &url("close"), SEG, json!({})).await.0,
        StatusCode::OK
    );
    let (s, v) = get(&app, &format!("/sessions/{id}"), SEG).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["phase"], "Closed");
    assert_eq!(
        get(&app, "/sessions/S9999", SEG).await.0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn analytics_reads_are_stable() {
    let app = app();
    let catalog = Catalog::default_catalog();
    let events =
        segrate_core::simulate(&segrate_core::SimulationProfile::new(1, 30, 5), &catalog).unwrap();
    let seg1: Vec<_> = events
        .into_iter()
        .filter(|e| e.actor_id == "seg1")
        .collect();
    assert_eq!(
        post(&app, "/events", SEG, json!(seg1)).await.0,
        StatusCode::CREATED
    );

    for uri in [
        "/analytics/durations",
        "/analytics/durations?batch_size=5&actor=seg1",
        "/analytics/view-usage",
        "/analytics/switch-stats",
        "/analytics/report",
        "/events?offset=3&limit=4",
        "/segments?patient=P001&task=1",
    ] {
        let (s1, a) = call(&app, Method::GET, uri, Some(SEG), None).await;
        let (s2, b) = call(&app, Method::GET, uri, Some(SEG), None).await;
        assert_eq!(s1, StatusCode::OK, "{uri}");
        assert_eq!(s2, StatusCode::OK);
        assert_eq!(a, b, "{uri}");
    }
    let (_, d) = get(&app, "/analytics/durations", SEG).await;
    assert_eq!(d["durations"].as_array().unwrap().len(), 30);
    let (_, page) = get(&app, "/events?offset=3&limit=4", SEG).await;
    assert_eq!(page["events"].as_array().unwrap().len(), 4);
    assert_eq!(page["events"][0]["event_id"], 4);
    let (s, _) = get(&app, "/analytics/durations?batch_size=0", SEG).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ServerConfig::new(dir.path());
    config.tokens = tokens();
    config.raters = raters();
    {
        let app = router(AppState::open(&config).unwrap());
        let mut evs: Vec<Value> = full_task1(true).into_iter().map(|d| json!(d)).collect();
        evs.push(submit());
        assert_eq!(
            post(&app, "/events", SEG, json!(evs)).await.0,
            StatusCode::CREATED
        );
        let (s, _) = post(
            &app,
            "/sessions",
            SEG,
            json!({"patient_id": "P1", "hand": "right", "date": "2024-01-02"}),
        )
        .await;
        assert_eq!(s, StatusCode::CREATED);
    }
    let app = router(AppState::open(&config).unwrap());
    let (_, csv) = call(&app, Method::GET, "/export/flat", Some(SEG), None).await;
    assert!(String::from_utf8(csv).unwrap().starts_with(NARRATIVE_CSV));
    let (_, q) = get(&app, "/ratings/queue", SEG).await;
    assert_eq!(q["ratable"].as_array().unwrap().len(), 1);
    assert_eq!(get(&app, "/sessions/S0001", SEG).await.0, StatusCode::OK);
}
