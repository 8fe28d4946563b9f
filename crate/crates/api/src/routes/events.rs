use std::collections::HashMap;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::Json;
use serde::Deserialize;
use serde_json::{json, Value};

use segrate_core::segmentation::validate_submission;
use segrate_core::{
    AnnotationEvent, CameraView, EventAction, EventDraft, Hand, Millis, SegmentSlot,
    SegmentationState, StreamKey, VideoKey,
};

use super::ApiResult;
use crate::error::ApiError;
use crate::state::{Actor, AppState};

/// One event as posted by a client. The actor comes from the token.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventInput {
    #[serde(default)]
    pub actor_id: Option<String>,
    #[serde(default)]
    pub timestamp_ms: Option<Millis>,
    pub patient_id: String,
    pub hand: Hand,
    pub task_number: u8,
    pub slot: SegmentSlot,
    pub action: EventAction,
    #[serde(default)]
    pub camera: Option<CameraView>,
    #[serde(default)]
    pub frame_value: Option<u32>,
    #[serde(default)]
    pub text: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum EventsBody {
    Envelope {
        events: Vec<EventInput>,
        #[serde(default)]
        expected_stream_len: Option<u64>,
    },
    Many(Vec<EventInput>),
    One(Box<EventInput>),
}

impl EventsBody {
    fn into_parts(self) -> (Vec<EventInput>, Option<u64>) {
        match self {
            EventsBody::Envelope {
                events,
                expected_stream_len,
            } => (events, expected_stream_len),
            EventsBody::Many(events) => (events, None),
            EventsBody::One(e) => (vec![*e], None),
        }
    }
}

/// Default timestamps never run behind the stream's last event.
fn stamp(state: &AppState, last: &mut HashMap<StreamKey, Millis>, key: &StreamKey) -> Millis {
    let prev = *last.entry(key.clone()).or_insert_with(|| {
        state
            .store()
            .stream_events(key)
            .last()
            .map_or(Millis(i64::MIN), |e| e.timestamp_ms)
    });
    Millis::now().max(prev)
}

pub(super) async fn post_events(
    Actor(actor): Actor,
    State(state): State<AppState>,
    body: Result<Json<EventsBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let (inputs, expected) = body?.0.into_parts();
    if inputs.is_empty() {
        return Err(ApiError::bad_request("no events given"));
    }
    let _guard = state.write_guard();
    let mut last: HashMap<StreamKey, Millis> = HashMap::new();
    let mut drafts = Vec::with_capacity(inputs.len());
    for input in inputs {
        if input.actor_id.as_deref().is_some_and(|a| a != actor) {
            return Err(ApiError::new(
                StatusCode::FORBIDDEN,
                "actor_mismatch",
                format!("token belongs to `{actor}`"),
            ));
        }
        let key = StreamKey {
            actor_id: actor.clone(),
            patient_id: input.patient_id,
            hand: input.hand,
            task_number: input.task_number,
        };
        let ts = match input.timestamp_ms {
            Some(ts) => ts,
            None => stamp(&state, &mut last, &key),
        };
        last.insert(key.clone(), ts);
        drafts.push(EventDraft {
            camera: input.camera,
            frame_value: input.frame_value,
            text: input.text,
            ..EventDraft::new(&key, ts, input.slot, input.action)
        });
    }

    if let Some(expected) = expected {
        let first = drafts[0].stream();
        if drafts.iter().any(|d| d.stream() != first) {
            return Err(ApiError::bad_request(
                "expected_stream_len needs all events in one stream",
            ));
        }
        let actual = state.store().stream_len(&first);
        if actual != expected {
            return Err(segrate_core::EventError::StreamConflict { expected, actual }.into());
        }
    }

    let submits = check_submissions(&state, &drafts)?;
    let ids = state.store().append_batch(drafts.clone())?;

    if !submits.is_empty() {
        let mut desk = state.desk();
        for (video, at) in submits {
            desk.record_valid_segmentation(video, Some(actor.clone()), at)?;
        }
    }
    let events: Vec<AnnotationEvent> = ids
        .into_iter()
        .zip(drafts)
        .map(|(event_id, draft)| AnnotationEvent { event_id, draft })
        .collect();
    Ok((StatusCode::CREATED, Json(json!({ "events": events }))))
}

/// Runs submission rules for every SubmitTask against the stream as it would be at that point.
fn check_submissions(
    state: &AppState,
    drafts: &[EventDraft],
) -> ApiResult<Vec<(VideoKey, Millis)>> {
    let mut folds: HashMap<StreamKey, SegmentationState> = HashMap::new();
    let mut submits = Vec::new();
    for d in drafts {
        let key = d.stream();
        let sequence = state.catalog().expected_sequence(d.task_number)?;
        if !folds.contains_key(&key) {
            let mut fold = SegmentationState::new(sequence);
            for e in state.store().stream_events(&key) {
                fold.apply(&e)
                    .map_err(|e| ApiError::internal(e.to_string()))?;
            }
            folds.insert(key.clone(), fold);
        }
        let fold = folds.get_mut(&key).expect("inserted above");
        if d.action == EventAction::SubmitTask {
            validate_submission(fold.records(), sequence).map_err(ApiError::submission)?;
            submits.push((key.video(), d.timestamp_ms));
        }
        // Field and slot errors surface from the store with their own codes.
        let _ = fold.apply(d);
    }
    Ok(submits)
}

/// Appends a FeedbackNote to `actor`'s own stream for the video.
pub(crate) fn append_feedback(
    state: &AppState,
    actor: &str,
    video: &VideoKey,
    slot: Option<SegmentSlot>,
    text: &str,
) -> ApiResult<AnnotationEvent> {
    let sequence = state.catalog().expected_sequence(video.task_number)?;
    let slot = slot.unwrap_or(sequence[0]);
    let key = StreamKey {
        actor_id: actor.to_string(),
        patient_id: video.patient_id.clone(),
        hand: video.hand,
        task_number: video.task_number,
    };
    let ts = stamp(state, &mut HashMap::new(), &key);
    let draft = EventDraft::new(&key, ts, slot, EventAction::FeedbackNote).text(text);
    let id = state.store().append(draft.clone())?;
    Ok(AnnotationEvent {
        event_id: id,
        draft,
    })
}
