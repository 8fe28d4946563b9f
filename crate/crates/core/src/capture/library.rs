use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::session::{CaptureSession, TaskRecording};
use super::{parse_view, CaptureError};
use crate::catalog::CameraView;
use crate::common::{task_in_range, Hand, VideoKey};
use crate::jsonl::Journal;

pub const VIDEOS_FILE: &str = "videos.jsonl";

/// One registered video file: the bulk ingestion record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub patient: String,
    pub hand: Hand,
    pub task: u8,
    pub view: CameraView,
    pub path: String,
    pub fps: f64,
    pub resolution: String,
    pub usable: bool,
}

impl VideoRecord {
    pub fn key(&self) -> VideoKey {
        VideoKey::new(self.patient.clone(), self.hand, self.task)
    }

    fn check(&self) -> Result<(), CaptureError> {
        if self.patient.trim().is_empty() {
            return Err(CaptureError::BadRecord("empty patient".into()));
        }
        if !task_in_range(self.task) {
            return Err(CaptureError::TaskOutOfRange(self.task));
        }
        if self.path.trim().is_empty() {
            return Err(CaptureError::BadRecord("empty path".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(CaptureError::BadRecord(format!(
                "fps {} not positive",
                self.fps
            )));
        }
        Ok(())
    }
}

/// Splits `<patient>_<hand>_task<NN>_<view>.<ext>` into its parts. Patient ids may contain `_`.
pub fn parse_video_filename(name: &str) -> Result<(String, Hand, u8, CameraView), CaptureError> {
    let bad = || CaptureError::BadFilename(name.to_string());
    let file = Path::new(name);
    file.extension().ok_or_else(bad)?;
    let stem = file.file_stem().and_then(|s| s.to_str()).ok_or_else(bad)?;
    let mut parts = stem.rsplitn(4, '_');
    let view = parts.next().ok_or_else(bad)?;
    let task = parts.next().ok_or_else(bad)?;
    let hand = parts.next().ok_or_else(bad)?;
    let patient = parts.next().filter(|p| !p.is_empty()).ok_or_else(bad)?;
    let digits = task.strip_prefix("task").ok_or_else(bad)?;
    if digits.len() != 2 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let task: u8 = digits.parse().map_err(|_| bad())?;
    if !task_in_range(task) {
        return Err(CaptureError::TaskOutOfRange(task));
    }
    let hand: Hand = hand.parse().map_err(|_| bad())?;
    Ok((patient.to_string(), hand, task, parse_view(view)?))
}

/// Registered task videos. A later registration of the same (video, view) replaces the earlier one.
pub struct VideoLibrary {
    videos: BTreeMap<(VideoKey, CameraView), VideoRecord>,
    journal: Option<Journal<VideoRecord>>,
}

impl VideoLibrary {
    pub fn in_memory() -> Self {
        VideoLibrary {
            videos: BTreeMap::new(),
            journal: None,
        }
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self, CaptureError> {
        let (journal, records): (_, Vec<VideoRecord>) =
            Journal::open(dir.as_ref().join(VIDEOS_FILE))?;
        let mut lib = Self::in_memory();
        for r in records {
            lib.videos.insert((r.key(), r.view), r);
        }
        lib.journal = Some(journal);
        Ok(lib)
    }

    pub fn register_all(&mut self, records: Vec<VideoRecord>) -> Result<usize, CaptureError> {
        for r in &records {
            r.check()?;
        }
        if let Some(j) = &mut self.journal {
            j.append_all(&records)?;
        }
        let n = records.len();
        for r in records {
            self.videos.insert((r.key(), r.view), r);
        }
        Ok(n)
    }

    /// Registers the four views of a completed recording.
    pub fn register_recording(
        &mut self,
        session: &CaptureSession,
        recording: &TaskRecording,
    ) -> Result<usize, CaptureError> {
        let records = recording
            .video_refs
            .iter()
            .map(|(view, v)| VideoRecord {
                patient: session.patient_id.clone(),
                hand: session.hand,
                task: recording.task_number,
                view: *view,
                path: v.path.clone(),
                fps: v.fps,
                resolution: v.resolution.clone(),
                usable: v.usable,
            })
            .collect();
        self.register_all(records)
    }

    /// Imports line-delimited JSON records. Nothing is registered if any line is bad.
    pub fn import_jsonl(&mut self, text: &str) -> Result<usize, CaptureError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: VideoRecord = serde_json::from_str(line)
                .map_err(|e| CaptureError::BadRecord(format!("line {}: {e}", i + 1)))?;
            records.push(r);
        }
        self.register_all(records)
    }

    /// Imports files named by the bulk convention, all sharing one frame rate and resolution.
    pub fn import_filenames<S: AsRef<str>>(
        &mut self,
        names: &[S],
        fps: f64,
        resolution: &str,
    ) -> Result<usize, CaptureError> {
        let mut records = Vec::new();
        for name in names {
            let name = name.as_ref();
            let base = Path::new(name)
                .file_name()
                .and_then(|s| s.to_str())
                .unwrap_or(name);
            let (patient, hand, task, view) = parse_video_filename(base)?;
            records.push(VideoRecord {
                patient,
                hand,
                task,
                view,
                path: name.to_string(),
                fps,
                resolution: resolution.to_string(),
                usable: true,
            });
        }
        self.register_all(records)
    }

    /// Videos of one patient's task, both hands, ordered by hand then view.
    pub fn videos_for(&self, patient: &str, task: u8) -> Vec<VideoRecord> {
        self.videos
            .values()
            .filter(|r| r.patient == patient && r.task == task)
            .cloned()
            .collect()
    }

    pub fn all(&self) -> impl Iterator<Item = &VideoRecord> {
        self.videos.values()
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn unusable_count(&self) -> usize {
        self.videos.values().filter(|r| !r.usable).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{CaptureDesk, StubRig};
    use crate::common::Millis;
    use proptest::prelude::*;

    #[test]
    fn parses_convention() {
        assert_eq!(
            parse_video_filename("p_07_right_task05_back.mp4").unwrap(),
            ("p_07".to_string(), Hand::Right, 5, CameraView::Back)
        );
        for bad in [
            "p1_left_task5_back.mp4",
            "p1_left_task05_back",
            "p1_middle_task05_back.mp4",
            "_left_task05_back.mp4",
            "p1_left_job05_back.mp4",
        ] {
            assert!(
                matches!(parse_video_filename(bad), Err(CaptureError::BadFilename(_))),
                "{bad}"
            );
        }
        assert_eq!(
            parse_video_filename("p1_left_task05_side.mp4"),
            Err(CaptureError::UnknownView("side".into()))
        );
        assert_eq!(
            parse_video_filename("p1_left_task20_back.mp4"),
            Err(CaptureError::TaskOutOfRange(20))
        );
    }

    #[test]
    fn jsonl_import_is_all_or_nothing() {
        let mut lib = VideoLibrary::in_memory();
        let good = r#"{"patient":"1","hand":"left","task":1,"view":"Back","path":"a.mp4","fps":30,"resolution":"3840x2160","usable":false}"#;
        let bad = r#"{"patient":"1","hand":"left","task":40,"view":"Back","path":"a.mp4","fps":30,"resolution":"x","usable":true}"#;
        assert!(lib.import_jsonl(&format!("{good}\n{bad}\n")).is_err());
        assert!(lib.is_empty());
        assert_eq!(lib.import_jsonl(&format!("{good}\n\n")).unwrap(), 1);
        assert_eq!(lib.unusable_count(), 1);
    }

    #[test]
    fn stub_recordings_register_four_views() {
        let dir = tempfile::tempdir().unwrap();
        let mut desk = CaptureDesk::in_memory(Box::new(StubRig));
        let mut lib = VideoLibrary::open(dir.path()).unwrap();
        let day = chrono::NaiveDate::from_ymd_opt(2024, 5, 2).unwrap();
        let s = desk.begin_session("9", Hand::Right, day).unwrap();
        let (rec, session) = desk
            .update(&s.session_id, |s, rig| {
                s.mark_calibrated("c")?;
                for v in CameraView::ALL {
                    s.check_camera(v, crate::capture::CameraStatus::Ok)?;
                }
                s.start_task(12, Millis(0))?;
                Ok(s.stop_task(Millis(900), rig)?.clone())
            })
            .unwrap();
        assert_eq!(lib.register_recording(&session, &rec).unwrap(), 4);
        let reopened = VideoLibrary::open(dir.path()).unwrap();
        let vids = reopened.videos_for("9", 12);
        assert_eq!(vids.len(), 4);
        for v in vids {
            let (patient, hand, task, view) = parse_video_filename(&v.path).unwrap();
            assert_eq!(
                (patient.as_str(), hand, task, view),
                ("9", Hand::Right, 12, v.view)
            );
        }
    }

    proptest! {
        #[test]
        fn filename_round_trip(
            patient in "[a-z0-9]{1,4}(_[a-z0-9]{1,3})?",
            right in any::<bool>(),
            task in 1u8..=19,
            view in 0usize..4,
        ) {
            let hand = if right { Hand::Right } else { Hand::Left };
            let view = CameraView::ALL[view];
            let name = format!("{patient}_{hand}_task{task:02}_{}.mov", view.as_str().to_lowercase());
            prop_assert_eq!(parse_video_filename(&name).unwrap(), (patient, hand, task, view));
        }
    }
}
