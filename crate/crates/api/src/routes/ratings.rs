use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::Response;
use axum::Json;
use serde::Deserialize;
use serde_json::{json, Value};

use segrate_core::rating::{ratings_csv_string, AssignmentId, ProgressReport, RatingSubmission};
use segrate_core::{Millis, SegmentSlot, VideoKey};

use super::{append_feedback, csv_response, query, ApiResult};
use crate::state::{Actor, AppState};

pub(super) async fn assign(
    _: Actor,
    State(state): State<AppState>,
    body: Result<Json<VideoKey>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let video = body?.0;
    let assignments = state.desk().assign(&video, state.raters(), Millis::now())?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "assignments": assignments })),
    ))
}

#[derive(Debug, Deserialize)]
pub(super) struct AssignmentsQuery {
    #[serde(default)]
    rater: Option<String>,
    #[serde(default)]
    all: bool,
}

/// Pending assignments for the caller (or `rater`); `all=true` lists every status.
pub(super) async fn assignments(
    Actor(actor): Actor,
    State(state): State<AppState>,
    q: Result<Query<AssignmentsQuery>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let q = query(q)?;
    let rater = q.rater.unwrap_or(actor);
    let desk = state.desk();
    let list: Vec<_> = if q.all {
        desk.assignments()
            .filter(|a| a.rater_id == rater)
            .cloned()
            .collect()
    } else {
        desk.pending_for(&rater)
    };
    Ok(Json(json!({ "rater_id": rater, "assignments": list })))
}

pub(super) async fn queue(_: Actor, State(state): State<AppState>) -> Json<Value> {
    let desk = state.desk();
    Json(json!({
        "ratable": desk.ratable_queue(),
        "unassigned": desk.unassigned(),
    }))
}

pub(super) async fn submit(
    Actor(actor): Actor,
    State(state): State<AppState>,
    body: Result<Json<RatingSubmission>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let submission = body?.0;
    let _guard = state.write_guard();
    let outcome = state
        .desk()
        .submit_rating(&actor, submission, Millis::now())?;
    let event = match &outcome.flag {
        Some(note) => Some(append_feedback(
            &state,
            &actor,
            &note.video,
            None,
            &note.text,
        )?),
        None => None,
    };
    Ok((
        StatusCode::CREATED,
        Json(json!({ "outcome": outcome, "feedback_event": event })),
    ))
}

#[derive(Debug, Deserialize)]
pub(super) struct FeedbackBody {
    assignment_id: AssignmentId,
    text: String,
    #[serde(default)]
    slot: Option<SegmentSlot>,
}

/// A rater reports a segmentation problem without rating the task.
pub(super) async fn feedback(
    Actor(actor): Actor,
    State(state): State<AppState>,
    body: Result<Json<FeedbackBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let body = body?.0;
    let _guard = state.write_guard();
    let note = state.desk().flag_segmentation_problem(
        &actor,
        body.assignment_id,
        &body.text,
        body.slot,
        Millis::now(),
    )?;
    let event = append_feedback(&state, &actor, &note.video, note.slot, &note.text)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "flag": note, "feedback_event": event })),
    ))
}

pub(super) async fn progress(_: Actor, State(state): State<AppState>) -> Json<ProgressReport> {
    Json(state.desk().progress())
}

pub(super) async fn export(_: Actor, State(state): State<AppState>) -> Response {
    csv_response(ratings_csv_string(&state.desk()))
}
