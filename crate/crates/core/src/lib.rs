//! Capture, segmentation and rating pipeline for multi-view ARAT task videos.
//!
//! - [`catalog`]: task definitions, segment vocabulary, recommended views.
//! - [`events`]: the append-only annotation log and its flat export.
//! - [`segmentation`]: folding streams into segment records and validating them.
//! - [`rating`]: dual-rater assignment, rating forms and segmentation feedback.
//! - [`capture`]: the clinic-side capture session state machine.
//! - [`analytics`]: annotator behavior metrics over event streams.
//! - [`simulate`]: deterministic synthetic annotator streams.

pub mod analytics;
pub mod capture;
pub mod catalog;
pub mod common;
pub mod events;
pub mod jsonl;
pub mod rating;
pub mod scenario;
pub mod segmentation;
pub mod simulate;

pub use analytics::AnalyticsReport;
pub use capture::{CaptureDesk, CaptureSession, VideoLibrary};
pub use catalog::{CameraView, Catalog, CatalogError, SegmentKind, SegmentSlot, TaskDefinition};
pub use common::{Hand, Millis, VideoKey};
pub use events::{
    AnnotationEvent, EventAction, EventDraft, EventError, EventFilter, EventId, EventStore,
    FlatRow, StreamKey,
};
pub use rating::{RatingDesk, RatingForm};
pub use segmentation::{fold_state, SegmentRecord, SegmentationState};
pub use simulate::{simulate, SimulationProfile};
