use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use serde::Deserialize;
use serde_json::{json, Value};

use segrate_core::capture::{parse_date, CameraStatus, CaptureSession, SessionId};
use segrate_core::{CameraView, Hand, Millis, VideoKey};

use super::ApiResult;
use crate::state::{Actor, AppState};

#[derive(Debug, Deserialize)]
pub(super) struct NewSession {
    patient_id: String,
    hand: Hand,
    /// `YYYY-MM-DD`; defaults to today (UTC).
    #[serde(default)]
    date: Option<String>,
}

pub(super) async fn create(
    _: Actor,
    State(state): State<AppState>,
    body: Result<Json<NewSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<CaptureSession>)> {
    let body = body?.0;
    let date = match &body.date {
        Some(d) => parse_date(d)?,
        None => chrono::Utc::now().date_naive(),
    };
    let session = state
        .capture()
        .begin_session(&body.patient_id, body.hand, date)?;
    Ok((StatusCode::CREATED, Json(session)))
}

pub(super) async fn list(_: Actor, State(state): State<AppState>) -> Json<Value> {
    let capture = state.capture();
    let sessions: Vec<&CaptureSession> = capture.sessions().collect();
    Json(json!({ "sessions": sessions }))
}

pub(super) async fn get_one(
    _: Actor,
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<CaptureSession>> {
    Ok(Json(state.capture().session(&SessionId(id))?.clone()))
}

#[derive(Debug, Deserialize)]
pub(super) struct Calibrate {
    calibration_ref: String,
}

pub(super) async fn calibrate(
    _: Actor,
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Calibrate>, JsonRejection>,
) -> ApiResult<Json<CaptureSession>> {
    let body = body?.0;
    let (_, s) = state.capture().update(&SessionId(id), |s, _| {
        s.mark_calibrated(&body.calibration_ref)
    })?;
    Ok(Json(s))
}

#[derive(Debug, Deserialize)]
pub(super) struct CameraCheck {
    view: CameraView,
    status: CameraStatus,
}

pub(super) async fn camera_check(
    _: Actor,
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<CameraCheck>, JsonRejection>,
) -> ApiResult<Json<CaptureSession>> {
    let body = body?.0;
    let (_, s) = state.capture().update(&SessionId(id), |s, _| {
        s.check_camera(body.view, body.status)
    })?;
    Ok(Json(s))
}

#[derive(Debug, Deserialize)]
pub(super) struct StartTask {
    task_number: u8,
    #[serde(default)]
    at_ms: Option<Millis>,
}

pub(super) async fn start_task(
    _: Actor,
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<StartTask>, JsonRejection>,
) -> ApiResult<Json<CaptureSession>> {
    let body = body?.0;
    let at = body.at_ms.unwrap_or_else(Millis::now);
    let (_, s) = state.capture().update(&SessionId(id), |s, _| {
        s.start_task(body.task_number, at).map(|_| ())
    })?;
    Ok(Json(s))
}

#[derive(Debug, Deserialize)]
pub(super) struct StopTask {
    #[serde(default)]
    at_ms: Option<Millis>,
}

/// Stops the running take and registers its four videos for segmentation.
pub(super) async fn stop_task(
    _: Actor,
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<StopTask>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let body = body?.0;
    let at = body.at_ms.unwrap_or_else(Millis::now);
    let (recording, session) = state
        .capture()
        .update(&SessionId(id), |s, rig| s.stop_task(at, rig).cloned())?;
    state.library().register_recording(&session, &recording)?;
    state.desk().register_video(VideoKey::new(
        session.patient_id.clone(),
        session.hand,
        recording.task_number,
    ))?;
    Ok(Json(json!({ "recording": recording, "session": session })))
}

#[derive(Debug, Deserialize)]
pub(super) struct Preliminary {
    task_number: u8,
    score: u8,
    #[serde(default)]
    note: Option<String>,
}

pub(super) async fn preliminary(
    _: Actor,
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Preliminary>, JsonRejection>,
) -> ApiResult<Json<CaptureSession>> {
    let body = body?.0;
    let (_, s) = state.capture().update(&SessionId(id), |s, _| {
        s.record_preliminary(body.task_number, body.score, body.note)
            .map(|_| ())
    })?;
    Ok(Json(s))
}

#[derive(Debug, Deserialize)]
pub(super) struct Note {
    note: String,
}

pub(super) async fn note(
    _: Actor,
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Note>, JsonRejection>,
) -> ApiResult<Json<CaptureSession>> {
    let body = body?.0;
    let (_, s) = state
        .capture()
        .update(&SessionId(id), |s, _| s.add_note(&body.note))?;
    Ok(Json(s))
}

pub(super) async fn close(
    _: Actor,
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<CaptureSession>> {
    let (_, s) = state.capture().update(&SessionId(id), |s, _| s.close())?;
    Ok(Json(s))
}
