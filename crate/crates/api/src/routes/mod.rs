mod analytics;
mod events;
mod ratings;
mod sessions;

use std::collections::BTreeMap;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use segrate_core::events::flat_csv_string;
use segrate_core::segmentation::{
    detect_gaps, detect_overlaps, validate_submission, GapNotice, OverlapWarning, SubmissionError,
};
use segrate_core::{
    fold_state, AnnotationEvent, CameraView, EventAction, EventFilter, Hand, SegmentRecord,
    SegmentSlot, StreamKey, TaskDefinition,
};

use crate::error::ApiError;
use crate::state::{Actor, AppState};

pub(crate) use events::append_feedback;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/catalog/tasks", get(list_tasks))
        .route("/catalog/tasks/{n}", get(get_task))
        .route("/patients/{id}/tasks/{n}/videos", get(task_videos))
        .route("/events", get(list_events).post(events::post_events))
        .route("/segments", get(segments))
        .route("/export/flat", get(export_flat))
        .route("/ratings", post(ratings::submit))
        .route("/ratings/assign", post(ratings::assign))
        .route("/ratings/assignments", get(ratings::assignments))
        .route("/ratings/queue", get(ratings::queue))
        .route("/ratings/progress", get(ratings::progress))
        .route("/ratings/export", get(ratings::export))
        .route("/feedback", post(ratings::feedback))
        .route("/sessions", get(sessions::list).post(sessions::create))
        .route("/sessions/{id}", get(sessions::get_one))
        .route("/sessions/{id}/calibrate", post(sessions::calibrate))
        .route("/sessions/{id}/camera-check", post(sessions::camera_check))
        .route("/sessions/{id}/start-task", post(sessions::start_task))
        .route("/sessions/{id}/stop-task", post(sessions::stop_task))
        .route("/sessions/{id}/preliminary", post(sessions::preliminary))
        .route("/sessions/{id}/notes", post(sessions::note))
        .route("/sessions/{id}/close", post(sessions::close))
        .route("/analytics/durations", get(analytics::durations))
        .route("/analytics/view-usage", get(analytics::view_usage))
        .route("/analytics/switch-stats", get(analytics::switch_stats))
        .route("/analytics/report", get(analytics::report))
        .with_state(state)
}

pub(crate) type ApiResult<T> = Result<T, ApiError>;

pub(crate) fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    Ok(q?.0)
}

pub(crate) fn csv_response(body: String) -> Response {
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response()
}

async fn health(State(state): State<AppState>) -> Response {
    let h = state.store().health();
    let mut body = json!({
        "store": if h.ok { "ok" } else { "failed" },
        "catalog": state.catalog().version(),
        "events": h.events,
    });
    if let Some(detail) = h.detail {
        body["detail"] = Value::String(detail);
    }
    let status = if h.ok {
        StatusCode::OK
    } else {
        StatusCode::SERVICE_UNAVAILABLE
    };
    (status, Json(body)).into_response()
}

#[derive(Debug, Serialize)]
struct TaskView {
    task_number: u8,
    subgroup: String,
    sequence: Vec<SegmentSlot>,
    recommended_view: BTreeMap<SegmentSlot, CameraView>,
    definitions: BTreeMap<SegmentSlot, String>,
    reference_urls: Vec<String>,
}

fn task_view(state: &AppState, t: &TaskDefinition) -> TaskView {
    let catalog = state.catalog();
    TaskView {
        task_number: t.task_number,
        subgroup: t.subgroup.clone(),
        sequence: t.sequence.clone(),
        recommended_view: t.recommended_view.clone(),
        definitions: t
            .sequence
            .iter()
            .map(|s| {
                let text = catalog
                    .task_segment_definition(t.task_number, s.kind())
                    .unwrap_or_default();
                (*s, text.to_string())
            })
            .collect(),
        reference_urls: t.reference_urls.clone(),
    }
}

async fn list_tasks(_: Actor, State(state): State<AppState>) -> Json<Value> {
    let tasks: Vec<TaskView> = state
        .catalog()
        .tasks()
        .map(|t| task_view(&state, t))
        .collect();
    let zoom: BTreeMap<CameraView, f64> = CameraView::ALL
        .into_iter()
        .map(|v| (v, state.catalog().zoom_factor(v)))
        .collect();
    Json(json!({
        "catalog_version": state.catalog().version(),
        "zoom": zoom,
        "tasks": tasks,
    }))
}

fn task_param(raw: &str) -> ApiResult<u8> {
    raw.parse()
        .map_err(|_| ApiError::not_found("unknown_task", format!("no task `{raw}`")))
}

async fn get_task(
    _: Actor,
    State(state): State<AppState>,
    Path(n): Path<String>,
) -> ApiResult<Json<TaskView>> {
    let task = state.catalog().task(task_param(&n)?)?;
    Ok(Json(task_view(&state, task)))
}

async fn task_videos(
    _: Actor,
    State(state): State<AppState>,
    Path((patient, n)): Path<(String, String)>,
) -> ApiResult<Json<Value>> {
    let task = state.catalog().task(task_param(&n)?)?;
    let videos = state.library().videos_for(&patient, task.task_number);
    Ok(Json(json!({
        "patient_id": patient,
        "task_number": task.task_number,
        "recommended_view": task.recommended_view,
        "videos": videos,
    })))
}

#[derive(Debug, Deserialize)]
pub(crate) struct Page {
    #[serde(default)]
    offset: usize,
    #[serde(default)]
    limit: Option<usize>,
}

async fn list_events(
    _: Actor,
    State(state): State<AppState>,
    filter: Result<Query<EventFilter>, QueryRejection>,
    page: Result<Query<Page>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let filter = query(filter)?;
    let page = query(page)?;
    let events = state.store().list_events(&filter);
    let total = events.len();
    let slice: Vec<&AnnotationEvent> = events
        .iter()
        .skip(page.offset)
        .take(page.limit.unwrap_or(usize::MAX))
        .collect();
    Ok(Json(json!({
        "total": total,
        "offset": page.offset,
        "events": slice,
    })))
}

#[derive(Debug, Deserialize)]
struct SegmentsQuery {
    patient: String,
    task: u8,
    #[serde(default)]
    hand: Option<Hand>,
    #[serde(default)]
    actor: Option<String>,
}

/// Folded state of one annotator's stream.
#[derive(Debug, Serialize)]
pub struct StreamSegments {
    pub actor_id: String,
    pub hand: Hand,
    pub event_count: usize,
    pub records: Vec<SegmentRecord>,
    pub overlaps: Vec<OverlapWarning>,
    pub gaps: Vec<GapNotice>,
    pub submission_errors: Vec<SubmissionError>,
    pub submitted: bool,
}

async fn segments(
    _: Actor,
    State(state): State<AppState>,
    q: Result<Query<SegmentsQuery>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let q = query(q)?;
    let sequence = state.catalog().expected_sequence(q.task)?;
    let mut filter = EventFilter::all().patient(q.patient.clone()).task(q.task);
    if let Some(hand) = q.hand {
        filter = filter.hand(hand);
    }
    if let Some(actor) = &q.actor {
        filter = filter.actor(actor.clone());
    }
    let mut streams: BTreeMap<StreamKey, Vec<AnnotationEvent>> = BTreeMap::new();
    for e in state.store().list_events(&filter) {
        streams.entry(e.stream()).or_default().push(e);
    }
    let mut out = Vec::new();
    for (key, events) in streams {
        if events.iter().all(|e| e.action == EventAction::FeedbackNote) {
            continue;
        }
        let records =
            fold_state(&events, sequence).map_err(|e| ApiError::internal(e.to_string()))?;
        out.push(StreamSegments {
            actor_id: key.actor_id,
            hand: key.hand,
            event_count: events.len(),
            overlaps: detect_overlaps(&records),
            gaps: detect_gaps(&records),
            submission_errors: validate_submission(&records, sequence)
                .err()
                .unwrap_or_default(),
            submitted: events.iter().any(|e| e.action == EventAction::SubmitTask),
            records,
        });
    }
    Ok(Json(json!({
        "patient_id": q.patient,
        "task_number": q.task,
        "sequence": sequence,
        "streams": out,
    })))
}

async fn export_flat(
    _: Actor,
    State(state): State<AppState>,
    filter: Result<Query<EventFilter>, QueryRejection>,
) -> ApiResult<Response> {
    let filter = query(filter)?;
    Ok(csv_response(flat_csv_string(
        &state.store().export_flat(&filter),
    )))
}
