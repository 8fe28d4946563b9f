//! Clinic-side capture protocol.
//!
//! A [`CaptureSession`] walks through calibration, a check of the four cameras and
//! task administration. Each task performance is a [`TaskRecording`] whose start
//! and stop also drive the task timer; stopping registers one video per view.

mod library;
mod session;

use chrono::NaiveDate;
use thiserror::Error;

use crate::catalog::CameraView;
use crate::common::Millis;
use crate::jsonl::JournalError;

pub use library::{parse_video_filename, VideoLibrary, VideoRecord, VIDEOS_FILE};
pub use session::{
    CameraStatus, CaptureDesk, CaptureRig, CaptureSession, Phase, SessionId, StubRig,
    TaskRecording, VideoRef, SESSIONS_FILE,
};

#[derive(Debug, Error, PartialEq)]
pub enum CaptureError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("calibration required first")]
    CalibrationRequired,
    #[error("calibration reference must not be empty")]
    EmptyCalibration,
    #[error("recording in progress")]
    RecordingInProgress,
    #[error("no active recording")]
    NoActiveRecording,
    #[error("task {0} outside 1-19")]
    TaskOutOfRange(u8),
    #[error("{op} not allowed in phase {phase:?}")]
    WrongPhase { op: &'static str, phase: Phase },
    #[error("stop at {stop} must follow start at {start}")]
    NonPositiveDuration { start: Millis, stop: Millis },
    #[error("preliminary score {0} outside 0-3")]
    ScoreOutOfRange(u8),
    #[error("no completed recording for task {0}")]
    NoRecording(u8),
    #[error("unknown camera view `{0}`")]
    UnknownView(String),
    #[error("cannot parse video file name `{0}`")]
    BadFilename(String),
    #[error("bad video record: {0}")]
    BadRecord(String),
    #[error("{0}")]
    Journal(String),
}

impl From<JournalError> for CaptureError {
    fn from(e: JournalError) -> Self {
        CaptureError::Journal(e.to_string())
    }
}

/// Parses a view name as used in file names and requests.
pub fn parse_view(s: &str) -> Result<CameraView, CaptureError> {
    s.parse()
        .map_err(|_| CaptureError::UnknownView(s.to_string()))
}

pub fn parse_date(s: &str) -> Result<NaiveDate, CaptureError> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| CaptureError::BadRecord(format!("date `{s}`: {e}")))
}
