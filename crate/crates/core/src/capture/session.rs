use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::CaptureError;
use crate::catalog::CameraView;
use crate::common::{task_in_range, Hand, Millis, MAX_SCORE};
use crate::jsonl::Journal;

pub const SESSIONS_FILE: &str = "sessions.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    NeedsCalibration,
    CameraCheck,
    Administration,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraStatus {
    Ok,
    Failed,
    Unchecked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRef {
    pub path: String,
    pub fps: f64,
    pub resolution: String,
    pub usable: bool,
}

/// One take of one task. Re-takes are kept; only the latest is active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecording {
    pub task_number: u8,
    pub take: u32,
    pub started_at: Millis,
    #[serde(default)]
    pub stopped_at: Option<Millis>,
    #[serde(default)]
    pub timer_ms: Option<i64>,
    #[serde(default)]
    pub timer_seconds: Option<f64>,
    #[serde(default)]
    pub preliminary_score: Option<u8>,
    #[serde(default)]
    pub problem_note: Option<String>,
    #[serde(default)]
    pub video_refs: BTreeMap<CameraView, VideoRef>,
    pub active: bool,
}

impl TaskRecording {
    pub fn in_progress(&self) -> bool {
        self.stopped_at.is_none()
    }
}

/// Supplies per-view video metadata when a recording stops.
pub trait CaptureRig: Send + Sync {
    fn video_refs(
        &self,
        patient_id: &str,
        hand: Hand,
        task_number: u8,
        take: u32,
    ) -> BTreeMap<CameraView, VideoRef>;
}

/// Stand-in rig: four usable 4K 30 fps files named by the bulk-import convention.
#[derive(Debug, Clone, Default)]
pub struct StubRig;

impl CaptureRig for StubRig {
    fn video_refs(
        &self,
        patient_id: &str,
        hand: Hand,
        task_number: u8,
        take: u32,
    ) -> BTreeMap<CameraView, VideoRef> {
        CameraView::ALL
            .into_iter()
            .map(|view| {
                let name = format!(
                    "{patient_id}_{hand}_task{task_number:02}_{}.mp4",
                    view.as_str().to_ascii_lowercase()
                );
                let path = if take > 1 {
                    format!("take{take}/{name}")
                } else {
                    name
                };
                let video = VideoRef {
                    path,
                    fps: 30.0,
                    resolution: "3840x2160".into(),
                    usable: true,
                };
                (view, video)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureSession {
    pub session_id: SessionId,
    pub patient_id: String,
    pub hand: Hand,
    pub date: NaiveDate,
    pub phase: Phase,
    #[serde(default)]
    pub calibration_ref: Option<String>,
    /// True when the calibration came from an earlier session the same day.
    #[serde(default)]
    pub calibration_inherited: bool,
    pub camera_status: BTreeMap<CameraView, CameraStatus>,
    #[serde(default)]
    pub recordings: Vec<TaskRecording>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl CaptureSession {
    fn new(
        session_id: SessionId,
        patient_id: String,
        hand: Hand,
        date: NaiveDate,
        inherited: Option<String>,
    ) -> Self {
        CaptureSession {
            session_id,
            patient_id,
            hand,
            date,
            phase: if inherited.is_some() {
                Phase::CameraCheck
            } else {
                Phase::NeedsCalibration
            },
            calibration_inherited: inherited.is_some(),
            calibration_ref: inherited,
            camera_status: CameraView::ALL
                .into_iter()
                .map(|v| (v, CameraStatus::Unchecked))
                .collect(),
            recordings: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn all_cameras_ok(&self) -> bool {
        CameraView::ALL
            .iter()
            .all(|v| self.camera_status.get(v) == Some(&CameraStatus::Ok))
    }

    pub fn recording_in_progress(&self) -> Option<&TaskRecording> {
        self.recordings.iter().find(|r| r.in_progress())
    }

    /// The latest completed take of `task_number`.
    pub fn active_recording(&self, task_number: u8) -> Option<&TaskRecording> {
        self.recordings
            .iter()
            .rev()
            .find(|r| r.task_number == task_number && r.active && !r.in_progress())
    }

    fn not_closed(&self) -> Result<(), CaptureError> {
        if self.phase == Phase::Closed {
            return Err(CaptureError::WrongPhase {
                op: "update",
                phase: Phase::Closed,
            });
        }
        Ok(())
    }

    fn advance(&mut self) {
        if self.phase == Phase::CameraCheck
            && self.calibration_ref.is_some()
            && self.all_cameras_ok()
        {
            self.phase = Phase::Administration;
        }
    }

    pub fn mark_calibrated(&mut self, artifact_ref: &str) -> Result<(), CaptureError> {
        self.not_closed()?;
        if artifact_ref.trim().is_empty() {
            return Err(CaptureError::EmptyCalibration);
        }
        if self.phase == Phase::Administration {
            return Err(CaptureError::WrongPhase {
                op: "calibrate",
                phase: self.phase,
            });
        }
        self.calibration_ref = Some(artifact_ref.trim().to_string());
        self.calibration_inherited = false;
        self.phase = Phase::CameraCheck;
        self.advance();
        Ok(())
    }

    /// Records one camera's status. A failure during administration returns the session to camera check.
    pub fn check_camera(
        &mut self,
        view: CameraView,
        status: CameraStatus,
    ) -> Result<(), CaptureError> {
        self.not_closed()?;
        if self.phase == Phase::NeedsCalibration {
            return Err(CaptureError::CalibrationRequired);
        }
        if self.recording_in_progress().is_some() {
            return Err(CaptureError::RecordingInProgress);
        }
        self.camera_status.insert(view, status);
        if self.phase == Phase::Administration && status != CameraStatus::Ok {
            self.phase = Phase::CameraCheck;
        }
        self.advance();
        Ok(())
    }

    pub fn start_task(
        &mut self,
        task_number: u8,
        at: Millis,
    ) -> Result<&TaskRecording, CaptureError> {
        if self.phase != Phase::Administration {
            return Err(CaptureError::WrongPhase {
                op: "start_task",
                phase: self.phase,
            });
        }
        if self.recording_in_progress().is_some() {
            return Err(CaptureError::RecordingInProgress);
        }
        if !task_in_range(task_number) {
            return Err(CaptureError::TaskOutOfRange(task_number));
        }
        let take = self
            .recordings
            .iter()
            .filter(|r| r.task_number == task_number)
            .count() as u32
            + 1;
        self.recordings.push(TaskRecording {
            task_number,
            take,
            started_at: at,
            stopped_at: None,
            timer_ms: None,
            timer_seconds: None,
            preliminary_score: None,
            problem_note: None,
            video_refs: BTreeMap::new(),
            active: false,
        });
        Ok(self.recordings.last().expect("just pushed"))
    }

    pub fn stop_task(
        &mut self,
        at: Millis,
        rig: &dyn CaptureRig,
    ) -> Result<&TaskRecording, CaptureError> {
        let idx = self
            .recordings
            .iter()
            .position(|r| r.in_progress())
            .ok_or(CaptureError::NoActiveRecording)?;
        let started = self.recordings[idx].started_at;
        if at <= started {
            return Err(CaptureError::NonPositiveDuration {
                start: started,
                stop: at,
            });
        }
        let task = self.recordings[idx].task_number;
        for r in self.recordings.iter_mut().filter(|r| r.task_number == task) {
            r.active = false;
        }
        let refs = rig.video_refs(&self.patient_id, self.hand, task, self.recordings[idx].take);
        let rec = &mut self.recordings[idx];
        let ms = at.0 - started.0;
        rec.stopped_at = Some(at);
        rec.timer_ms = Some(ms);
        rec.timer_seconds = Some(ms as f64 / 1000.0);
        rec.video_refs = refs;
        rec.active = true;
        Ok(rec)
    }

    pub fn record_preliminary(
        &mut self,
        task_number: u8,
        score: u8,
        note: Option<String>,
    ) -> Result<&TaskRecording, CaptureError> {
        self.not_closed()?;
        if score > MAX_SCORE {
            return Err(CaptureError::ScoreOutOfRange(score));
        }
        let rec = self
            .recordings
            .iter_mut()
            .rev()
            .find(|r| r.task_number == task_number && r.active && !r.in_progress())
            .ok_or(CaptureError::NoRecording(task_number))?;
        rec.preliminary_score = Some(score);
        rec.problem_note = note.filter(|n| !n.trim().is_empty());
        Ok(rec)
    }

    pub fn add_note(&mut self, note: &str) -> Result<(), CaptureError> {
        self.not_closed()?;
        self.notes.push(note.to_string());
        Ok(())
    }

    pub fn close(&mut self) -> Result<(), CaptureError> {
        if self.phase != Phase::Administration {
            return Err(CaptureError::WrongPhase {
                op: "close",
                phase: self.phase,
            });
        }
        if self.recording_in_progress().is_some() {
            return Err(CaptureError::RecordingInProgress);
        }
        self.phase = Phase::Closed;
        Ok(())
    }
}

/// All capture sessions, with optional persistence of every session snapshot.
pub struct CaptureDesk {
    sessions: BTreeMap<SessionId, CaptureSession>,
    next: u64,
    rig: Box<dyn CaptureRig>,
    journal: Option<Journal<CaptureSession>>,
}

impl CaptureDesk {
    pub fn in_memory(rig: Box<dyn CaptureRig>) -> Self {
        CaptureDesk {
            sessions: BTreeMap::new(),
            next: 1,
            rig,
            journal: None,
        }
    }

    /// Opens `dir/sessions.jsonl`; the last snapshot of each session wins.
    pub fn open(dir: impl AsRef<Path>, rig: Box<dyn CaptureRig>) -> Result<Self, CaptureError> {
        let (journal, snapshots): (_, Vec<CaptureSession>) =
            Journal::open(dir.as_ref().join(SESSIONS_FILE))?;
        let mut desk = Self::in_memory(rig);
        for s in snapshots {
            desk.sessions.insert(s.session_id.clone(), s);
        }
        desk.next = desk.sessions.len() as u64 + 1;
        desk.journal = Some(journal);
        Ok(desk)
    }

    pub fn begin_session(
        &mut self,
        patient_id: &str,
        hand: Hand,
        date: NaiveDate,
    ) -> Result<CaptureSession, CaptureError> {
        let inherited = self
            .sessions
            .values()
            .filter(|s| s.date == date)
            .find_map(|s| s.calibration_ref.clone());
        let id = SessionId(format!("S{:04}", self.next));
        let session = CaptureSession::new(id, patient_id.to_string(), hand, date, inherited);
        self.persist(&session)?;
        self.next += 1;
        self.sessions
            .insert(session.session_id.clone(), session.clone());
        Ok(session)
    }

    pub fn session(&self, id: &SessionId) -> Result<&CaptureSession, CaptureError> {
        self.sessions
            .get(id)
            .ok_or_else(|| CaptureError::UnknownSession(id.0.clone()))
    }

    pub fn sessions(&self) -> impl Iterator<Item = &CaptureSession> {
        self.sessions.values()
    }

    fn persist(&mut self, session: &CaptureSession) -> Result<(), CaptureError> {
        if let Some(j) = &mut self.journal {
            j.append(session)?;
        }
        Ok(())
    }

    /// Applies `op` to a copy of the session and keeps it only if `op` succeeds.
    pub fn update<R>(
        &mut self,
        id: &SessionId,
        op: impl FnOnce(&mut CaptureSession, &dyn CaptureRig) -> Result<R, CaptureError>,
    ) -> Result<(R, CaptureSession), CaptureError> {
        let mut copy = self.session(id)?.clone();
        let out = op(&mut copy, self.rig.as_ref())?;
        self.persist(&copy)?;
        self.sessions.insert(id.clone(), copy.clone());
        Ok((out, copy))
    }
}
