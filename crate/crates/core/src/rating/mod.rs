//! Dual blind rating of segmented task videos.
//!
//! Videos whose segmentation has been submitted enter the rating queue. Each is
//! assigned to distinct raters, who score it with a configurable [`RatingForm`].
//! A rater who spots a segmentation problem flags it, which sends the video back
//! to the segmentor and pauses rating until the video is revalidated.

mod desk;
mod form;

use thiserror::Error;

use crate::catalog::CatalogError;
use crate::common::VideoKey;
use crate::jsonl::JournalError;

pub use desk::{
    ratings_csv_string, select_raters, AssignmentId, AssignmentStatus, DeskEntry, FlagNote,
    ProgressReport, RatingAssignment, RatingDesk, RatingOutcome, RatingRecord, RatingSubmission,
    SegmentationStatus, VideoStatus, DEFAULT_RATERS_PER_VIDEO, RATINGS_FILE,
};
pub use form::{
    Answer, AnswerType, AppliesTo, Question, RatingForm, TaskScope, FORM_SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("invalid rating form: {0}")]
    InvalidForm(String),
    #[error("task score {0} outside 0-3")]
    ScoreOutOfRange(u8),
    #[error("missing answer to `{0}`")]
    MissingAnswer(String),
    #[error("bad answer to `{question}`: {reason}")]
    BadAnswer { question: String, reason: String },
    #[error("unknown assignment {0}")]
    UnknownAssignment(u64),
    #[error("assignment {0} already completed")]
    AlreadyCompleted(u64),
    #[error("assignment {0} was retired after a segmentation flag")]
    AssignmentRetired(u64),
    #[error("video {0} has no valid segmentation")]
    NotRatable(VideoKey),
    #[error("video {0} already has raters in this round")]
    AlreadyAssigned(VideoKey),
    #[error("need {needed} distinct raters, pool has {available}")]
    InsufficientRaters { needed: usize, available: usize },
    #[error("feedback text required")]
    EmptyFeedback,
    #[error("rater {rater} does not hold assignment {assignment}")]
    NotYourAssignment { rater: String, assignment: u64 },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Journal(#[from] JournalError),
}
