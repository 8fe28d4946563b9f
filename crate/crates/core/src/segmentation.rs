//! Folding event streams into segment records, and the checks the
//! segmentation table applies before a task can be submitted.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{CameraView, SegmentSlot};
use crate::events::{AnnotationEvent, EventAction, EventDraft, FrameField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("event addresses slot {0}, which is not in the task's sequence")]
    SlotNotInSequence(SegmentSlot),
    #[error("segment {0} has no start frame")]
    StartUnset(SegmentSlot),
    #[error("segment {0} has no end frame")]
    EndUnset(SegmentSlot),
    #[error("fps must be positive")]
    BadFps,
}

/// Current state of one segment in the table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub slot: SegmentSlot,
    pub camera_start: Option<CameraView>,
    pub camera_end: Option<CameraView>,
    pub start_frame: Option<u32>,
    pub end_frame: Option<u32>,
    pub confirmed: bool,
}

impl SegmentRecord {
    pub fn unset(slot: SegmentSlot) -> Self {
        SegmentRecord {
            slot,
            camera_start: None,
            camera_end: None,
            start_frame: None,
            end_frame: None,
            confirmed: false,
        }
    }

    pub fn with_frames(slot: SegmentSlot, start: u32, end: u32) -> Self {
        SegmentRecord {
            start_frame: Some(start),
            end_frame: Some(end),
            ..SegmentRecord::unset(slot)
        }
    }

    pub fn confirmed(mut self) -> Self {
        self.confirmed = true;
        self
    }

    /// `[start, end)` when both frames are set and `end > start`.
    pub fn interval(&self) -> Option<(u32, u32)> {
        match (self.start_frame, self.end_frame) {
            (Some(s), Some(e)) if e > s => Some((s, e)),
            _ => None,
        }
    }

    /// Applies one event addressed to this record's slot. Frame edits are
    /// last-write-wins and clear the confirmation; a confirm marks the record
    /// confirmed only when both frames form a non-empty interval.
    pub fn apply(&mut self, event: &EventDraft) {
        match event.action {
            EventAction::ConfirmSegment => self.confirmed = self.interval().is_some(),
            action => {
                if let (Some(field), Some(frame)) = (action.frame_field(), event.frame_value) {
                    match field {
                        FrameField::Start => {
                            self.start_frame = Some(frame);
                            self.camera_start = event.camera;
                        }
                        FrameField::End => {
                            self.end_frame = Some(frame);
                            self.camera_end = event.camera;
                        }
                    }
                    self.confirmed = false;
                }
            }
        }
    }

    /// Frame values and confirmation, without camera provenance.
    pub fn frames(&self) -> (SegmentSlot, Option<u32>, Option<u32>, bool) {
        (self.slot, self.start_frame, self.end_frame, self.confirmed)
    }
}

/// Incremental fold of one stream over a task's expected sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationState {
    records: Vec<SegmentRecord>,
    index: HashMap<SegmentSlot, usize>,
}

impl SegmentationState {
    pub fn new(sequence: &[SegmentSlot]) -> Self {
        SegmentationState {
            records: sequence.iter().copied().map(SegmentRecord::unset).collect(),
            index: sequence.iter().enumerate().map(|(i, s)| (*s, i)).collect(),
        }
    }

    /// Applies one event to the record of its slot.
    pub fn apply(&mut self, event: &EventDraft) -> Result<(), SegmentationError> {
        let i = *self
            .index
            .get(&event.slot)
            .ok_or(SegmentationError::SlotNotInSequence(event.slot))?;
        self.records[i].apply(event);
        Ok(())
    }

    pub fn records(&self) -> &[SegmentRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SegmentRecord> {
        self.records
    }
}

impl AsRef<EventDraft> for AnnotationEvent {
    fn as_ref(&self) -> &EventDraft {
        &self.draft
    }
}

impl AsRef<EventDraft> for EventDraft {
    fn as_ref(&self) -> &EventDraft {
        self
    }
}

/// Folds a single stream into one record per expected slot, in sequence order.
pub fn fold_state<E: AsRef<EventDraft>>(
    events: &[E],
    sequence: &[SegmentSlot],
) -> Result<Vec<SegmentRecord>, SegmentationError> {
    let mut state = SegmentationState::new(sequence);
    for e in events {
        state.apply(e.as_ref())?;
    }
    Ok(state.into_records())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapWarning {
    pub earlier_slot: SegmentSlot,
    pub later_slot: SegmentSlot,
    pub overlap_frames: u32,
}

/// One warning per pair of records (earlier in sequence first) whose frame
/// intervals share more than a boundary frame. Records without a valid
/// interval are skipped.
pub fn detect_overlaps(records: &[SegmentRecord]) -> Vec<OverlapWarning> {
    let mut out = Vec::new();
    for (i, a) in records.iter().enumerate() {
        let Some((a_start, a_end)) = a.interval() else {
            continue;
        };
        for b in &records[i + 1..] {
            let Some((b_start, b_end)) = b.interval() else {
                continue;
            };
            let lo = a_start.max(b_start);
            let hi = a_end.min(b_end);
            if hi > lo {
                out.push(OverlapWarning {
                    earlier_slot: a.slot,
                    later_slot: b.slot,
                    overlap_frames: hi - lo,
                });
            }
        }
    }
    out
}

/// Informational: frames left uncovered between consecutive set segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapNotice {
    pub earlier_slot: SegmentSlot,
    pub later_slot: SegmentSlot,
    pub gap_frames: u32,
}

pub fn detect_gaps(records: &[SegmentRecord]) -> Vec<GapNotice> {
    let set: Vec<(SegmentSlot, u32, u32)> = records
        .iter()
        .filter_map(|r| r.interval().map(|(s, e)| (r.slot, s, e)))
        .collect();
    set.windows(2)
        .filter_map(|w| {
            let (earlier, _, end) = w[0];
            let (later, start, _) = w[1];
            (start > end).then(|| GapNotice {
                earlier_slot: earlier,
                later_slot: later,
                gap_frames: start - end,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SubmissionError {
    MissingSegment { slot: SegmentSlot },
    Unconfirmed { slot: SegmentSlot },
    InvalidRange { slot: SegmentSlot },
    Overlap(OverlapWarning),
}

impl fmt::Display for SubmissionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubmissionError::MissingSegment { slot } => write!(f, "missing segment {slot}"),
            SubmissionError::Unconfirmed { slot } => write!(f, "unconfirmed segment {slot}"),
            SubmissionError::InvalidRange { slot } => {
                write!(f, "segment {slot} end frame is not after its start frame")
            }
            SubmissionError::Overlap(w) => write!(
                f,
                "segments {} and {} overlap by {} frames",
                w.earlier_slot, w.later_slot, w.overlap_frames
            ),
        }
    }
}

/// Checks every submission rule and reports all violations.
pub fn validate_submission(
    records: &[SegmentRecord],
    sequence: &[SegmentSlot],
) -> Result<(), Vec<SubmissionError>> {
    let mut errors = Vec::new();
    for slot in sequence {
        match records.iter().find(|r| r.slot == *slot) {
            None => errors.push(SubmissionError::MissingSegment { slot: *slot }),
            Some(r) if !r.confirmed => errors.push(SubmissionError::Unconfirmed { slot: *slot }),
            Some(_) => {}
        }
    }
    for r in records.iter().filter(|r| r.confirmed) {
        if r.interval().is_none() {
            errors.push(SubmissionError::InvalidRange { slot: r.slot });
        }
    }
    errors.extend(
        detect_overlaps(records)
            .into_iter()
            .map(SubmissionError::Overlap),
    );
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// Video frame rate as a ratio, e.g. 30000/1001.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fps {
    pub num: u32,
    pub den: u32,
}

impl Fps {
    pub fn new(num: u32, den: u32) -> Result<Self, SegmentationError> {
        if num == 0 || den == 0 {
            return Err(SegmentationError::BadFps);
        }
        Ok(Fps { num, den })
    }

    pub fn whole(fps: u32) -> Result<Self, SegmentationError> {
        Fps::new(fps, 1)
    }

    /// Converts a frame index to milliseconds, rounding half up.
    pub fn frame_to_ms(self, frame: u32) -> i64 {
        let numer = 2 * u128::from(frame) * 1000 * u128::from(self.den) + u128::from(self.num);
        (numer / (2 * u128::from(self.num))) as i64
    }
}

impl Default for Fps {
    fn default() -> Self {
        Fps { num: 30, den: 1 }
    }
}

/// Playback window of a segment, in milliseconds from the start of the task video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimWindow {
    pub start_ms: i64,
    pub end_ms: i64,
}

impl TrimWindow {
    pub fn start_seconds(&self) -> f64 {
        self.start_ms as f64 / 1000.0
    }

    pub fn end_seconds(&self) -> f64 {
        self.end_ms as f64 / 1000.0
    }
}

pub fn trim_bounds(record: &SegmentRecord, fps: Fps) -> Result<TrimWindow, SegmentationError> {
    let start = record
        .start_frame
        .ok_or(SegmentationError::StartUnset(record.slot))?;
    let end = record
        .end_frame
        .ok_or(SegmentationError::EndUnset(record.slot))?;
    Ok(TrimWindow {
        start_ms: fps.frame_to_ms(start),
        end_ms: fps.frame_to_ms(end),
    })
}
