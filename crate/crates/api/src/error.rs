use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Value};

use segrate_core::capture::CaptureError;
use segrate_core::events::FlatError;
use segrate_core::rating::RatingError;
use segrate_core::segmentation::SubmissionError;
use segrate_core::{CatalogError, EventError};

/// Error body returned by every endpoint. `machine_code` values are stable.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unauthorized() -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "missing or unknown X-Actor-Token",
        )
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "storage_failure",
            message,
        )
    }

    pub fn submission(errors: Vec<SubmissionError>) -> Self {
        let message = errors
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        ApiError {
            details: Some(json!({ "errors": errors })),
            ..Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "submission_invalid",
                message,
            )
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({
            "http_status": self.status.as_u16(),
            "machine_code": self.code,
            "human_message": self.message,
        });
        if let Some(details) = self.details {
            body["details"] = details;
        }
        (self.status, Json(body)).into_response()
    }
}

const UNPROCESSABLE: StatusCode = StatusCode::UNPROCESSABLE_ENTITY;
const CONFLICT: StatusCode = StatusCode::CONFLICT;

impl From<CatalogError> for ApiError {
    fn from(e: CatalogError) -> Self {
        match e {
            CatalogError::TaskOutOfRange(_) => Self::not_found("unknown_task", e.to_string()),
            CatalogError::SlotNotInTask { .. } => {
                Self::new(UNPROCESSABLE, "unknown_slot", e.to_string())
            }
            _ => Self::new(UNPROCESSABLE, "invalid_catalog", e.to_string()),
        }
    }
}

impl From<EventError> for ApiError {
    fn from(e: EventError) -> Self {
        let (status, code) = match &e {
            EventError::MissingActor => (StatusCode::BAD_REQUEST, "missing_actor"),
            EventError::MissingPatient => (StatusCode::BAD_REQUEST, "missing_patient"),
            EventError::FrameRequired(_) => (UNPROCESSABLE, "frame_required"),
            EventError::FrameNotAllowed(_) => (UNPROCESSABLE, "frame_not_allowed"),
            EventError::CameraRequired(_) => (UNPROCESSABLE, "camera_required"),
            EventError::TextRequired => (UNPROCESSABLE, "text_required"),
            EventError::TextNotAllowed(_) => (UNPROCESSABLE, "text_not_allowed"),
            EventError::UnknownTask(_) => (UNPROCESSABLE, "unknown_task"),
            EventError::UnknownSlot { .. } => (UNPROCESSABLE, "unknown_slot"),
            EventError::CorrectionWithoutInput { .. } => {
                (UNPROCESSABLE, "correction_without_input")
            }
            EventError::EmptySegment { .. } => (UNPROCESSABLE, "empty_segment"),
            EventError::TimestampRegression { .. } => (UNPROCESSABLE, "timestamp_regression"),
            EventError::StreamConflict { .. } => (CONFLICT, "stream_conflict"),
            EventError::Journal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_failure"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<FlatError> for ApiError {
    fn from(e: FlatError) -> Self {
        match e {
            FlatError::Event(inner) => inner.into(),
            other => Self::new(UNPROCESSABLE, "invalid_flat_rows", other.to_string()),
        }
    }
}

impl From<RatingError> for ApiError {
    fn from(e: RatingError) -> Self {
        let (status, code) = match &e {
            RatingError::InvalidForm(_) => (UNPROCESSABLE, "invalid_form"),
            RatingError::ScoreOutOfRange(_) => (UNPROCESSABLE, "score_out_of_range"),
            RatingError::MissingAnswer(_) => (UNPROCESSABLE, "missing_answer"),
            RatingError::BadAnswer { .. } => (UNPROCESSABLE, "bad_answer"),
            RatingError::UnknownAssignment(_) => (StatusCode::NOT_FOUND, "unknown_assignment"),
            RatingError::AlreadyCompleted(_) => (CONFLICT, "already_completed"),
            RatingError::AssignmentRetired(_) => (CONFLICT, "assignment_retired"),
            RatingError::NotRatable(_) => (CONFLICT, "not_ratable"),
            RatingError::AlreadyAssigned(_) => (CONFLICT, "already_assigned"),
            RatingError::InsufficientRaters { .. } => (UNPROCESSABLE, "insufficient_raters"),
            RatingError::EmptyFeedback => (UNPROCESSABLE, "feedback_required"),
            RatingError::NotYourAssignment { .. } => (StatusCode::FORBIDDEN, "not_your_assignment"),
            RatingError::Catalog(inner) => return ApiError::from(inner.clone()),
            RatingError::Journal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_failure"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<CaptureError> for ApiError {
    fn from(e: CaptureError) -> Self {
        let (status, code) = match &e {
            CaptureError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            CaptureError::CalibrationRequired => (CONFLICT, "calibration_required"),
            CaptureError::EmptyCalibration => (UNPROCESSABLE, "calibration_ref_required"),
            CaptureError::RecordingInProgress => (CONFLICT, "recording_in_progress"),
            CaptureError::NoActiveRecording => (CONFLICT, "no_active_recording"),
            CaptureError::TaskOutOfRange(_) => (UNPROCESSABLE, "task_out_of_range"),
            CaptureError::WrongPhase { .. } => (CONFLICT, "wrong_phase"),
            CaptureError::NonPositiveDuration { .. } => (UNPROCESSABLE, "non_positive_duration"),
            CaptureError::ScoreOutOfRange(_) => (UNPROCESSABLE, "score_out_of_range"),
            CaptureError::NoRecording(_) => (CONFLICT, "no_recording"),
            CaptureError::UnknownView(_) => (UNPROCESSABLE, "unknown_view"),
            CaptureError::BadFilename(_) => (UNPROCESSABLE, "bad_filename"),
            CaptureError::BadRecord(_) => (UNPROCESSABLE, "bad_record"),
            CaptureError::Journal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_failure"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(e.status(), "bad_request", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}
