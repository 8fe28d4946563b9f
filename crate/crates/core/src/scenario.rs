//! Canned event streams used by tests, demos and the acceptance suite.

use crate::catalog::{CameraView, SegmentKind, SegmentSlot};
use crate::common::{Hand, Millis};
use crate::events::{EventAction, EventDraft, StreamKey};

/// Start of the reference scenario, 2023-11-14T22:13:20Z.
pub const NARRATIVE_START: Millis = Millis(1_700_000_000_000);

pub fn narrative_stream() -> StreamKey {
    StreamKey {
        actor_id: "seg1".into(),
        patient_id: "1".into(),
        hand: Hand::Left,
        task_number: 1,
    }
}

/// The reference segmentation session for patient 1, left hand, task 1:
/// IP start 75 on the ipsilateral view and confirm; switch to contralateral,
/// IP end 92 and confirm; T from 92 to 111 and confirm; submit.
pub fn narrative() -> Vec<EventDraft> {
    let key = narrative_stream();
    let ip = SegmentSlot::first(SegmentKind::IP);
    let t = SegmentSlot::first(SegmentKind::T);
    let at = |s: i64| NARRATIVE_START.plus_ms(s * 1000);
    vec![
        EventDraft::new(&key, at(0), ip, EventAction::SetStartFrame)
            .camera(CameraView::Ipsilateral)
            .frame(75),
        EventDraft::new(&key, at(4), ip, EventAction::ConfirmSegment),
        EventDraft::new(&key, at(9), ip, EventAction::SelectCamera)
            .camera(CameraView::Contralateral),
        EventDraft::new(&key, at(15), ip, EventAction::SetEndFrame)
            .camera(CameraView::Contralateral)
            .frame(92),
        EventDraft::new(&key, at(18), ip, EventAction::ConfirmSegment),
        EventDraft::new(&key, at(25), t, EventAction::SetStartFrame)
            .camera(CameraView::Contralateral)
            .frame(92),
        EventDraft::new(&key, at(33), t, EventAction::SetEndFrame)
            .camera(CameraView::Contralateral)
            .frame(111),
        EventDraft::new(&key, at(36), t, EventAction::ConfirmSegment),
        EventDraft::new(&key, at(40), t, EventAction::SubmitTask),
    ]
}

/// The flat CSV the reference scenario exports to.
pub const NARRATIVE_CSV: &str =
    "Patient Id,Hand,Task number,Segment name,Camera name,Segment start frame,Segment end frame
1,left,1,IP,Ipsilateral,75,0
1,left,1,IP,Contralateral,75,92
1,left,1,T,Contralateral,92,111
";
