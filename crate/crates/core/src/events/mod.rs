//! Annotator actions and their append-only store.
//!
//! Every click in the segmentation tool becomes one [`AnnotationEvent`]. Events
//! are never edited: a correction is a new event. Current segmentation state is
//! obtained by folding a stream (see [`crate::segmentation`]).

mod flat;
mod store;

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{CameraView, CatalogError, SegmentSlot};
use crate::common::{Hand, Millis, VideoKey};
use crate::jsonl::JournalError;

pub use flat::{
    flat_csv_string, read_flat_csv, write_flat_csv, FlatError, FlatRow, FLAT_CSV_HEADER,
};
pub use store::{EventStore, StoreHealth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(pub u64);

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventAction {
    SelectCamera,
    SetStartFrame,
    SetEndFrame,
    CorrectStartFrame,
    CorrectEndFrame,
    ConfirmSegment,
    PlaybackCheck,
    SubmitTask,
    FeedbackNote,
}

/// Which boundary of a segment a frame action addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameField {
    Start,
    End,
}

impl EventAction {
    /// Frame-bearing actions carry a frame value.
    pub fn frame_field(self) -> Option<FrameField> {
        match self {
            EventAction::SetStartFrame | EventAction::CorrectStartFrame => Some(FrameField::Start),
            EventAction::SetEndFrame | EventAction::CorrectEndFrame => Some(FrameField::End),
            _ => None,
        }
    }

    pub fn is_frame_bearing(self) -> bool {
        self.frame_field().is_some()
    }

    pub fn is_correction(self) -> bool {
        matches!(
            self,
            EventAction::CorrectStartFrame | EventAction::CorrectEndFrame
        )
    }

    pub fn requires_camera(self) -> bool {
        self == EventAction::SelectCamera || self.is_frame_bearing()
    }
}

/// One annotator's work on one task video. Events of a stream are totally ordered.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub actor_id: String,
    pub patient_id: String,
    pub hand: Hand,
    pub task_number: u8,
}

impl StreamKey {
    pub fn video(&self) -> VideoKey {
        VideoKey::new(self.patient_id.clone(), self.hand, self.task_number)
    }
}

/// An event before the store has assigned it an id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDraft {
    pub timestamp_ms: Millis,
    pub actor_id: String,
    pub patient_id: String,
    pub hand: Hand,
    pub task_number: u8,
    pub slot: SegmentSlot,
    pub action: EventAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_value: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl EventDraft {
    /// A draft with no camera, frame or text; fill those in with the builder methods.
    pub fn new(
        stream: &StreamKey,
        timestamp_ms: Millis,
        slot: SegmentSlot,
        action: EventAction,
    ) -> Self {
        EventDraft {
            timestamp_ms,
            actor_id: stream.actor_id.clone(),
            patient_id: stream.patient_id.clone(),
            hand: stream.hand,
            task_number: stream.task_number,
            slot,
            action,
            camera: None,
            frame_value: None,
            text: None,
        }
    }

    pub fn camera(mut self, view: CameraView) -> Self {
        self.camera = Some(view);
        self
    }

    pub fn frame(mut self, frame: u32) -> Self {
        self.frame_value = Some(frame);
        self
    }

    pub fn text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    pub fn stream(&self) -> StreamKey {
        StreamKey {
            actor_id: self.actor_id.clone(),
            patient_id: self.patient_id.clone(),
            hand: self.hand,
            task_number: self.task_number,
        }
    }

    /// Field-level invariants that do not depend on stream history.
    pub fn check_fields(&self) -> Result<(), EventError> {
        let action = self.action;
        if self.actor_id.trim().is_empty() {
            return Err(EventError::MissingActor);
        }
        if self.patient_id.trim().is_empty() {
            return Err(EventError::MissingPatient);
        }
        match (action.is_frame_bearing(), self.frame_value) {
            (true, None) => return Err(EventError::FrameRequired(action)),
            (false, Some(_)) => return Err(EventError::FrameNotAllowed(action)),
            _ => {}
        }
        if action.requires_camera() && self.camera.is_none() {
            return Err(EventError::CameraRequired(action));
        }
        match (action == EventAction::FeedbackNote, self.text.as_deref()) {
            (true, None) => return Err(EventError::TextRequired),
            (true, Some(t)) if t.trim().is_empty() => return Err(EventError::TextRequired),
            (false, Some(_)) => return Err(EventError::TextNotAllowed(action)),
            _ => {}
        }
        Ok(())
    }
}

/// A stored, immutable annotator action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub event_id: EventId,
    #[serde(flatten)]
    pub draft: EventDraft,
}

impl Deref for AnnotationEvent {
    type Target = EventDraft;

    fn deref(&self) -> &EventDraft {
        &self.draft
    }
}

/// Selects events. Every provided field must match; `from`/`to` bound timestamps (`to` exclusive).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventFilter {
    #[serde(default)]
    pub patient: Option<String>,
    #[serde(default)]
    pub hand: Option<Hand>,
    #[serde(default)]
    pub task: Option<u8>,
    #[serde(default)]
    pub actor: Option<String>,
    #[serde(default)]
    pub from_ms: Option<i64>,
    #[serde(default)]
    pub to_ms: Option<i64>,
}

impl EventFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn patient(mut self, patient: impl Into<String>) -> Self {
        self.patient = Some(patient.into());
        self
    }

    pub fn hand(mut self, hand: Hand) -> Self {
        self.hand = Some(hand);
        self
    }

    pub fn task(mut self, task: u8) -> Self {
        self.task = Some(task);
        self
    }

    pub fn actor(mut self, actor: impl Into<String>) -> Self {
        self.actor = Some(actor.into());
        self
    }

    pub fn matches(&self, e: &EventDraft) -> bool {
        self.patient.as_deref().is_none_or(|p| p == e.patient_id)
            && self.hand.is_none_or(|h| h == e.hand)
            && self.task.is_none_or(|t| t == e.task_number)
            && self.actor.as_deref().is_none_or(|a| a == e.actor_id)
            && self.from_ms.is_none_or(|from| e.timestamp_ms.0 >= from)
            && self.to_ms.is_none_or(|to| e.timestamp_ms.0 < to)
    }
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("actor id required")]
    MissingActor,
    #[error("patient id required")]
    MissingPatient,
    #[error("{0:?} requires a frame value")]
    FrameRequired(EventAction),
    #[error("{0:?} does not carry a frame value")]
    FrameNotAllowed(EventAction),
    #[error("{0:?} requires a camera view")]
    CameraRequired(EventAction),
    #[error("text required")]
    TextRequired,
    #[error("{0:?} does not carry text")]
    TextNotAllowed(EventAction),
    #[error("unknown task: {0}")]
    UnknownTask(CatalogError),
    #[error("slot {slot} not in task {task}")]
    UnknownSlot { task: u8, slot: SegmentSlot },
    #[error("correction without prior input: {action:?} on {slot}")]
    CorrectionWithoutInput {
        action: EventAction,
        slot: SegmentSlot,
    },
    #[error("segment {slot} would have zero or negative length ({start}..{end})")]
    EmptySegment {
        slot: SegmentSlot,
        start: u32,
        end: u32,
    },
    #[error("timestamp {got} precedes the stream's last event at {last}")]
    TimestampRegression { last: Millis, got: Millis },
    #[error("stream conflict: expected {expected} prior events, stream has {actual}")]
    StreamConflict { expected: u64, actual: u64 },
    #[error(transparent)]
    Journal(#[from] JournalError),
}
