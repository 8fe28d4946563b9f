//! Small shared value types.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which hand performed the task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub fn as_str(self) -> &'static str {
        match self {
            Hand::Left => "left",
            Hand::Right => "right",
        }
    }
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Hand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Hand::Left),
            "right" | "r" => Ok(Hand::Right),
            other => Err(format!("unknown hand `{other}`")),
        }
    }
}

/// Wall-clock instant with millisecond precision, as milliseconds since the Unix epoch.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Millis(pub i64);

impl Millis {
    pub fn now() -> Self {
        Millis(chrono::Utc::now().timestamp_millis())
    }

    pub fn from_seconds(seconds: f64) -> Self {
        Millis((seconds * 1000.0).round() as i64)
    }

    /// Signed difference `self - earlier` in seconds.
    pub fn seconds_since(self, earlier: Millis) -> f64 {
        (self.0 - earlier.0) as f64 / 1000.0
    }

    pub fn plus_ms(self, ms: i64) -> Self {
        Millis(self.0 + ms)
    }
}

impl fmt::Display for Millis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// Identifies one task video: a patient's hand performing one ARAT task.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VideoKey {
    pub patient_id: String,
    pub hand: Hand,
    pub task_number: u8,
}

impl VideoKey {
    pub fn new(patient_id: impl Into<String>, hand: Hand, task_number: u8) -> Self {
        Self {
            patient_id: patient_id.into(),
            hand,
            task_number,
        }
    }
}

impl fmt::Display for VideoKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/task{:02}",
            self.patient_id, self.hand, self.task_number
        )
    }
}

/// First and last valid ARAT task numbers.
pub const FIRST_TASK: u8 = 1;
pub const LAST_TASK: u8 = 19;

/// ARAT scores are integers 0 through 3.
pub const MAX_SCORE: u8 = 3;

pub fn task_in_range(task_number: u8) -> bool {
    (FIRST_TASK..=LAST_TASK).contains(&task_number)
}
