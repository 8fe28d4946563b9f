use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::Serialize;

use super::flat::{flat_rows, synthesize_events, FlatError, FlatRow};
use super::{
    AnnotationEvent, EventAction, EventDraft, EventError, EventFilter, EventId, FrameField,
    StreamKey,
};
use crate::catalog::{Catalog, SegmentSlot};
use crate::common::Millis;
use crate::jsonl::Journal;

pub const EVENTS_FILE: &str = "events.jsonl";

#[derive(Debug, Clone, Copy, Default)]
struct SlotFrames {
    start: Option<u32>,
    end: Option<u32>,
}

#[derive(Debug, Clone, Default)]
struct StreamState {
    len: u64,
    last_ts: Option<Millis>,
    slots: HashMap<SegmentSlot, SlotFrames>,
}

impl StreamState {
    fn check(&self, draft: &EventDraft) -> Result<(), EventError> {
        if let Some(last) = self.last_ts {
            if draft.timestamp_ms < last {
                return Err(EventError::TimestampRegression {
                    last,
                    got: draft.timestamp_ms,
                });
            }
        }
        let frames = self.slots.get(&draft.slot).copied().unwrap_or_default();
        match draft.action {
            EventAction::CorrectStartFrame if frames.start.is_none() => {
                Err(EventError::CorrectionWithoutInput {
                    action: draft.action,
                    slot: draft.slot,
                })
            }
            EventAction::CorrectEndFrame if frames.end.is_none() => {
                Err(EventError::CorrectionWithoutInput {
                    action: draft.action,
                    slot: draft.slot,
                })
            }
            EventAction::ConfirmSegment => match (frames.start, frames.end) {
                (Some(start), Some(end)) if end <= start => Err(EventError::EmptySegment {
                    slot: draft.slot,
                    start,
                    end,
                }),
                _ => Ok(()),
            },
            _ => Ok(()),
        }
    }

    fn apply(&mut self, draft: &EventDraft) {
        self.len += 1;
        self.last_ts = Some(draft.timestamp_ms);
        if let (Some(field), Some(frame)) = (draft.action.frame_field(), draft.frame_value) {
            let frames = self.slots.entry(draft.slot).or_default();
            match field {
                FrameField::Start => frames.start = Some(frame),
                FrameField::End => frames.end = Some(frame),
            }
        }
    }
}

struct Inner {
    events: Vec<AnnotationEvent>,
    next_id: u64,
    streams: HashMap<StreamKey, StreamState>,
    journal: Option<Journal<AnnotationEvent>>,
}

/// Append-only store of annotation events, optionally backed by a JSONL journal.
///
/// Cheap to clone; clones share the same log.
#[derive(Clone)]
pub struct EventStore {
    catalog: Arc<Catalog>,
    dir: Option<PathBuf>,
    inner: Arc<RwLock<Inner>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoreHealth {
    pub ok: bool,
    pub events: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl EventStore {
    pub fn in_memory(catalog: Arc<Catalog>) -> Self {
        Self::with_events(catalog, None, Vec::new(), None)
    }

    /// Opens the store under `dir`, replaying `events.jsonl` if present.
    pub fn open(dir: impl AsRef<Path>, catalog: Arc<Catalog>) -> Result<Self, EventError> {
        let dir = dir.as_ref().to_path_buf();
        let (journal, events) = Journal::open(dir.join(EVENTS_FILE))?;
        Ok(Self::with_events(catalog, Some(dir), events, Some(journal)))
    }

    fn with_events(
        catalog: Arc<Catalog>,
        dir: Option<PathBuf>,
        events: Vec<AnnotationEvent>,
        journal: Option<Journal<AnnotationEvent>>,
    ) -> Self {
        let mut streams: HashMap<StreamKey, StreamState> = HashMap::new();
        let mut next_id = 1;
        for e in &events {
            streams.entry(e.stream()).or_default().apply(e);
            next_id = next_id.max(e.event_id.0 + 1);
        }
        EventStore {
            catalog,
            dir,
            inner: Arc::new(RwLock::new(Inner {
                events,
                next_id,
                streams,
                journal,
            })),
        }
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn check_catalog(&self, draft: &EventDraft) -> Result<(), EventError> {
        draft.check_fields()?;
        let task = self
            .catalog
            .task(draft.task_number)
            .map_err(EventError::UnknownTask)?;
        if !task.contains(draft.slot) {
            return Err(EventError::UnknownSlot {
                task: draft.task_number,
                slot: draft.slot,
            });
        }
        Ok(())
    }

    pub fn append(&self, draft: EventDraft) -> Result<EventId, EventError> {
        self.append_expecting(draft, None)
    }

    /// Appends one event. With `expected_len`, the append only succeeds if the
    /// event's stream currently holds exactly that many events.
    pub fn append_expecting(
        &self,
        draft: EventDraft,
        expected_len: Option<u64>,
    ) -> Result<EventId, EventError> {
        self.check_catalog(&draft)?;
        let mut inner = self.inner.write().expect("event store lock poisoned");
        let key = draft.stream();
        let empty = StreamState::default();
        let state = inner.streams.get(&key).unwrap_or(&empty);
        if let Some(expected) = expected_len {
            if expected != state.len {
                return Err(EventError::StreamConflict {
                    expected,
                    actual: state.len,
                });
            }
        }
        state.check(&draft)?;
        let event = AnnotationEvent {
            event_id: EventId(inner.next_id),
            draft,
        };
        if let Some(journal) = inner.journal.as_mut() {
            journal.append(&event)?;
        }
        inner.next_id += 1;
        inner.streams.entry(key).or_default().apply(&event);
        let id = event.event_id;
        inner.events.push(event);
        Ok(id)
    }

    /// Appends all drafts or none of them.
    pub fn append_batch(&self, drafts: Vec<EventDraft>) -> Result<Vec<EventId>, EventError> {
        for d in &drafts {
            self.check_catalog(d)?;
        }
        let mut inner = self.inner.write().expect("event store lock poisoned");
        let mut staged: HashMap<StreamKey, StreamState> = HashMap::new();
        for d in &drafts {
            let key = d.stream();
            if !staged.contains_key(&key) {
                let s = inner.streams.get(&key).cloned().unwrap_or_default();
                staged.insert(key.clone(), s);
            }
            let state = staged.get_mut(&key).expect("staged above");
            state.check(d)?;
            state.apply(d);
        }
        let first = inner.next_id;
        let events: Vec<AnnotationEvent> = drafts
            .into_iter()
            .enumerate()
            .map(|(i, draft)| AnnotationEvent {
                event_id: EventId(first + i as u64),
                draft,
            })
            .collect();
        if let Some(journal) = inner.journal.as_mut() {
            journal.append_all(&events)?;
        }
        inner.next_id += events.len() as u64;
        inner.streams.extend(staged);
        let ids = events.iter().map(|e| e.event_id).collect();
        inner.events.extend(events);
        Ok(ids)
    }

    /// Events matching `filter`, in append order.
    pub fn list_events(&self, filter: &EventFilter) -> Vec<AnnotationEvent> {
        let inner = self.inner.read().expect("event store lock poisoned");
        inner
            .events
            .iter()
            .filter(|e| filter.matches(e))
            .cloned()
            .collect()
    }

    pub fn stream_events(&self, key: &StreamKey) -> Vec<AnnotationEvent> {
        let inner = self.inner.read().expect("event store lock poisoned");
        inner
            .events
            .iter()
            .filter(|e| {
                e.actor_id == key.actor_id
                    && e.patient_id == key.patient_id
                    && e.hand == key.hand
                    && e.task_number == key.task_number
            })
            .cloned()
            .collect()
    }

    pub fn stream_len(&self, key: &StreamKey) -> u64 {
        let inner = self.inner.read().expect("event store lock poisoned");
        inner.streams.get(key).map_or(0, |s| s.len)
    }

    pub fn len(&self) -> usize {
        self.inner
            .read()
            .expect("event store lock poisoned")
            .events
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat rows for the matching events.
    pub fn export_flat(&self, filter: &EventFilter) -> Vec<FlatRow> {
        flat_rows(&self.list_events(filter))
    }

    /// Synthesizes and appends a minimal event stream per video whose flat export
    /// reproduces `rows`. Events are attributed to `actor_id` and timestamped
    /// 1 ms apart from `base`. Returns the number of events appended.
    pub fn import_flat(
        &self,
        rows: &[FlatRow],
        actor_id: &str,
        base: Millis,
    ) -> Result<usize, FlatError> {
        let drafts = synthesize_events(rows, &self.catalog, actor_id, base)?;
        let n = drafts.len();
        self.append_batch(drafts).map_err(FlatError::Event)?;
        Ok(n)
    }

    pub fn health(&self) -> StoreHealth {
        let events = self.len();
        match &self.dir {
            None => StoreHealth {
                ok: true,
                events,
                detail: None,
            },
            Some(dir) => {
                let file = dir.join(EVENTS_FILE);
                if file.is_file() {
                    StoreHealth {
                        ok: true,
                        events,
                        detail: None,
                    }
                } else {
                    StoreHealth {
                        ok: false,
                        events,
                        detail: Some(format!("{} is missing", file.display())),
                    }
                }
            }
        }
    }
}
