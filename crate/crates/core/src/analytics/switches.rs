use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::{CameraView, SegmentSlot};
use crate::events::{EventAction, EventDraft, StreamKey};

/// What happened between a camera switch and the next camera selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchCategory {
    StartInput,
    EndInput,
    StartCorrection,
    EndCorrection,
    Checking,
}

impl SwitchCategory {
    pub const ALL: [SwitchCategory; 5] = [
        SwitchCategory::StartInput,
        SwitchCategory::EndInput,
        SwitchCategory::StartCorrection,
        SwitchCategory::EndCorrection,
        SwitchCategory::Checking,
    ];

    pub fn of(action: EventAction) -> Option<SwitchCategory> {
        match action {
            EventAction::SetStartFrame => Some(SwitchCategory::StartInput),
            EventAction::SetEndFrame => Some(SwitchCategory::EndInput),
            EventAction::CorrectStartFrame => Some(SwitchCategory::StartCorrection),
            EventAction::CorrectEndFrame => Some(SwitchCategory::EndCorrection),
            EventAction::PlaybackCheck => Some(SwitchCategory::Checking),
            _ => None,
        }
    }
}

/// One view-changing camera selection and the categories seen in its window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchObservation {
    pub stream: StreamKey,
    pub slot: SegmentSlot,
    pub from: CameraView,
    pub to: CameraView,
    pub categories: BTreeSet<SwitchCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchRow {
    pub slot: String,
    pub switches: usize,
    pub start_input: usize,
    pub end_input: usize,
    pub start_correction: usize,
    pub end_correction: usize,
    pub checking: usize,
    pub pct_start_input: f64,
    pub pct_end_input: f64,
    pub pct_start_correction: f64,
    pub pct_end_correction: f64,
    pub pct_checking: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchStats {
    pub rows: Vec<SwitchRow>,
    pub total_switches: usize,
    pub frame_bearing_events: usize,
    pub overall_switch_fraction: f64,
}

impl SwitchStats {
    pub fn row(&self, slot: &str) -> Option<&SwitchRow> {
        self.rows.iter().find(|r| r.slot == slot)
    }
}

/// Finds view-changing selections stream by stream. The active view is unknown at stream
/// start, so the first selection is never a switch; frame events update it silently.
pub fn classify_switches<E: AsRef<EventDraft>>(events: &[E]) -> Vec<SwitchObservation> {
    let mut streams: BTreeMap<StreamKey, Vec<&EventDraft>> = BTreeMap::new();
    for e in events {
        let e = e.as_ref();
        streams.entry(e.stream()).or_default().push(e);
    }
    let mut out = Vec::new();
    for (stream, events) in streams {
        let mut active: Option<CameraView> = None;
        let mut open: Option<SwitchObservation> = None;
        for e in events {
            if e.action == EventAction::SelectCamera {
                out.extend(open.take());
                let Some(to) = e.camera else { continue };
                if let Some(from) = active.filter(|&v| v != to) {
                    open = Some(SwitchObservation {
                        stream: stream.clone(),
                        slot: e.slot,
                        from,
                        to,
                        categories: BTreeSet::new(),
                    });
                }
                active = Some(to);
                continue;
            }
            if e.action.is_frame_bearing() && e.camera.is_some() {
                active = e.camera;
            }
            if let (Some(obs), Some(cat)) = (open.as_mut(), SwitchCategory::of(e.action)) {
                obs.categories.insert(cat);
            }
        }
        out.extend(open);
    }
    out
}

/// Denominator of the overall switch rate: entries that carry a frame value.
pub fn total_entries<E: AsRef<EventDraft>>(events: &[E]) -> usize {
    events
        .iter()
        .filter(|e| e.as_ref().action.is_frame_bearing())
        .count()
}

pub fn overall_switch_fraction<E: AsRef<EventDraft>>(events: &[E]) -> f64 {
    let entries = total_entries(events);
    if entries == 0 {
        0.0
    } else {
        classify_switches(events).len() as f64 / entries as f64
    }
}

pub fn switch_stats<E: AsRef<EventDraft>>(events: &[E]) -> SwitchStats {
    let observations = classify_switches(events);
    let mut by_slot: BTreeMap<SegmentSlot, [usize; 6]> = BTreeMap::new();
    for obs in &observations {
        let c = by_slot.entry(obs.slot).or_default();
        c[0] += 1;
        for (i, cat) in SwitchCategory::ALL.iter().enumerate() {
            if obs.categories.contains(cat) {
                c[i + 1] += 1;
            }
        }
    }
    let rows = by_slot
        .into_iter()
        .map(|(slot, c)| {
            let pct = |n: usize| 100.0 * n as f64 / c[0] as f64;
            SwitchRow {
                slot: slot.to_string(),
                switches: c[0],
                start_input: c[1],
                end_input: c[2],
                start_correction: c[3],
                end_correction: c[4],
                checking: c[5],
                pct_start_input: pct(c[1]),
                pct_end_input: pct(c[2]),
                pct_start_correction: pct(c[3]),
                pct_end_correction: pct(c[4]),
                pct_checking: pct(c[5]),
            }
        })
        .collect();
    let entries = total_entries(events);
    SwitchStats {
        rows,
        total_switches: observations.len(),
        frame_bearing_events: entries,
        overall_switch_fraction: if entries == 0 {
            0.0
        } else {
            observations.len() as f64 / entries as f64
        },
    }
}
