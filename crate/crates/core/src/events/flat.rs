//! The flattened, one-row-per-confirmation export format.
//!
//! A row is emitted for every `ConfirmSegment` whose slot has at least one
//! frame set. The camera column is the view active at that moment. An unset
//! end frame is written as `0`; that sentinel exists only in this format.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AnnotationEvent, EventAction, EventDraft, EventError, FrameField, StreamKey};
use crate::catalog::{CameraView, Catalog, SegmentSlot};
use crate::common::{Hand, Millis};

pub const FLAT_CSV_HEADER: &str =
    "Patient Id,Hand,Task number,Segment name,Camera name,Segment start frame,Segment end frame";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatRow {
    #[serde(rename = "Patient Id")]
    pub patient_id: String,
    #[serde(rename = "Hand")]
    pub hand: Hand,
    #[serde(rename = "Task number")]
    pub task_number: u8,
    #[serde(rename = "Segment name")]
    pub segment_name: String,
    #[serde(rename = "Camera name")]
    pub camera_name: String,
    #[serde(rename = "Segment start frame")]
    pub start_frame: i64,
    #[serde(rename = "Segment end frame")]
    pub end_frame: i64,
}

#[derive(Debug, Error)]
pub enum FlatError {
    #[error("csv: {0}")]
    Csv(String),
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("row {row}: negative frame")]
    NegativeFrame { row: usize },
    #[error("row {row}: {reason}; no event stream produces this sequence")]
    NonMonotone { row: usize, reason: String },
    #[error(transparent)]
    Event(#[from] EventError),
}

#[derive(Default, Clone, Copy)]
struct Frames {
    start: Option<u32>,
    end: Option<u32>,
}

#[derive(Default)]
struct FlatStream {
    camera: Option<CameraView>,
    slots: HashMap<SegmentSlot, Frames>,
}

/// Replays events (in order) into flat rows.
pub(crate) fn flat_rows(events: &[AnnotationEvent]) -> Vec<FlatRow> {
    let mut streams: HashMap<StreamKey, FlatStream> = HashMap::new();
    let mut rows = Vec::new();
    for e in events {
        let stream = streams.entry(e.stream()).or_default();
        match e.action {
            EventAction::SelectCamera => stream.camera = e.camera.or(stream.camera),
            EventAction::ConfirmSegment => {
                let frames = stream.slots.get(&e.slot).copied().unwrap_or_default();
                if frames.start.is_none() && frames.end.is_none() {
                    continue;
                }
                let Some(camera) = stream.camera else {
                    continue;
                };
                rows.push(FlatRow {
                    patient_id: e.patient_id.clone(),
                    hand: e.hand,
                    task_number: e.task_number,
                    segment_name: e.slot.display_name(),
                    camera_name: camera.to_string(),
                    start_frame: frames.start.map_or(0, i64::from),
                    end_frame: frames.end.map_or(0, i64::from),
                });
            }
            action => {
                if let (Some(field), Some(frame)) = (action.frame_field(), e.frame_value) {
                    stream.camera = e.camera.or(stream.camera);
                    let f = stream.slots.entry(e.slot).or_default();
                    match field {
                        FrameField::Start => f.start = Some(frame),
                        FrameField::End => f.end = Some(frame),
                    }
                }
            }
        }
    }
    rows
}

fn frame(row: usize, value: i64) -> Result<u32, FlatError> {
    if value < 0 {
        return Err(FlatError::NegativeFrame { row });
    }
    u32::try_from(value).map_err(|_| FlatError::MalformedRow {
        row,
        reason: format!("frame {value} too large"),
    })
}

/// Builds the shortest event sequence whose flat export equals `rows`.
pub(crate) fn synthesize_events(
    rows: &[FlatRow],
    catalog: &Catalog,
    actor_id: &str,
    base: Millis,
) -> Result<Vec<EventDraft>, FlatError> {
    let mut streams: HashMap<StreamKey, FlatStream> = HashMap::new();
    let mut out = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let row = i + 1;
        let malformed = |reason: String| FlatError::MalformedRow { row, reason };

        let task = catalog
            .task(r.task_number)
            .map_err(|e| malformed(e.to_string()))?;
        let slot: SegmentSlot = r
            .segment_name
            .parse()
            .map_err(|e: crate::catalog::CatalogError| malformed(e.to_string()))?;
        if !task.contains(slot) {
            return Err(malformed(format!(
                "slot {slot} not in task {}",
                r.task_number
            )));
        }
        let camera: CameraView = r
            .camera_name
            .parse()
            .map_err(|e: crate::catalog::CatalogError| malformed(e.to_string()))?;
        if r.patient_id.trim().is_empty() {
            return Err(malformed("empty patient id".into()));
        }
        let start = frame(row, r.start_frame)?;
        let end = match frame(row, r.end_frame)? {
            0 => None,
            e => Some(e),
        };
        if let Some(end) = end {
            if end <= start {
                return Err(malformed(format!(
                    "end frame {end} not after start {start}"
                )));
            }
        }

        let key = StreamKey {
            actor_id: actor_id.to_string(),
            patient_id: r.patient_id.clone(),
            hand: r.hand,
            task_number: r.task_number,
        };
        let stream = streams.entry(key.clone()).or_default();
        let current = stream.slots.get(&slot).copied().unwrap_or_default();
        if current.end.is_some() && end.is_none() {
            return Err(FlatError::NonMonotone {
                row,
                reason: format!("end frame of {slot} returns to unset"),
            });
        }

        let mut push = |action: EventAction, value: Option<u32>| {
            let ts = base.plus_ms(out.len() as i64);
            let mut d = EventDraft::new(&key, ts, slot, action);
            if action.requires_camera() {
                d = d.camera(camera);
            }
            d.frame_value = value;
            out.push(d);
        };
        let start_changes = current.start != Some(start);
        let end_changes = end.is_some() && current.end != end;
        // frame events carry the camera; a bare switch is only needed for a re-confirmation
        if stream.camera != Some(camera) && !start_changes && !end_changes {
            push(EventAction::SelectCamera, None);
        }
        stream.camera = Some(camera);
        if start_changes {
            let action = if current.start.is_some() {
                EventAction::CorrectStartFrame
            } else {
                EventAction::SetStartFrame
            };
            push(action, Some(start));
        }
        if end_changes {
            let action = if current.end.is_some() {
                EventAction::CorrectEndFrame
            } else {
                EventAction::SetEndFrame
            };
            push(action, end);
        }
        push(EventAction::ConfirmSegment, None);
        stream.slots.insert(
            slot,
            Frames {
                start: Some(start),
                end,
            },
        );
    }
    Ok(out)
}

/// Writes rows under the flat CSV header, `\n`-terminated.
pub fn write_flat_csv<W: Write>(rows: &[FlatRow], out: W) -> Result<(), FlatError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(out);
    w.write_record(FLAT_CSV_HEADER.split(','))
        .map_err(|e| FlatError::Csv(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| FlatError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| FlatError::Csv(e.to_string()))
}

pub fn flat_csv_string(rows: &[FlatRow]) -> String {
    let mut buf = Vec::new();
    write_flat_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Parses flat CSV, requiring the exact header.
pub fn read_flat_csv<R: Read>(input: R) -> Result<Vec<FlatRow>, FlatError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| FlatError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != FLAT_CSV_HEADER {
        return Err(FlatError::Csv(format!(
            "unexpected header `{}`",
            header.join(",")
        )));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| FlatError::MalformedRow {
                row: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
