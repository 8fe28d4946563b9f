use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Answer, RatingError, RatingForm};
use crate::catalog::{Catalog, SegmentSlot};
use crate::common::{Millis, VideoKey};
use crate::jsonl::Journal;

pub const RATINGS_FILE: &str = "ratings.jsonl";
pub const DEFAULT_RATERS_PER_VIDEO: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssignmentId(pub u64);

impl fmt::Display for AssignmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `Retired` marks assignments voided because the segmentation they were made against was flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentStatus {
    Pending,
    Completed,
    Retired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentationStatus {
    Unsegmented,
    Valid,
    NeedsCorrection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingAssignment {
    pub assignment_id: AssignmentId,
    #[serde(flatten)]
    pub video: VideoKey,
    pub rater_id: String,
    /// Segmentation round the assignment belongs to; bumps each time a flagged video is revalidated.
    pub round: u32,
    pub status: AssignmentStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub assignment_id: AssignmentId,
    pub task_score: u8,
    #[serde(default)]
    pub answers: BTreeMap<String, Answer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation_problem: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub assignment_id: AssignmentId,
    pub rater_id: String,
    pub task_score: u8,
    pub answers: BTreeMap<String, Answer>,
    pub submitted_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagNote {
    pub assignment_id: AssignmentId,
    pub rater_id: String,
    #[serde(flatten)]
    pub video: VideoKey,
    /// Segmentor whose stream receives the note, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentor_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<SegmentSlot>,
    pub text: String,
    pub at: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingOutcome {
    pub assignment_id: AssignmentId,
    pub video: VideoKey,
    pub fully_rated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<FlagNote>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoStatus {
    #[serde(flatten)]
    pub video: VideoKey,
    pub segmentation: SegmentationStatus,
    pub round: u32,
    pub completed_ratings: usize,
    pub fully_rated: bool,
    pub flags: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressReport {
    pub videos_total: usize,
    pub videos_segmented: usize,
    pub videos_fully_rated: usize,
    pub videos_flagged: usize,
    /// Fully rated over segmented, in percent.
    pub percent_rated: f64,
    /// Videos ever flagged over fully rated, in percent.
    pub percent_flagged: f64,
    /// No segmented videos yet; both percentages are 0.
    pub empty: bool,
}

/// Persisted desk operations. Replaying them rebuilds the desk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum DeskEntry {
    Registered {
        video: VideoKey,
    },
    SegmentationValid {
        video: VideoKey,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        segmentor_id: Option<String>,
        at: Millis,
    },
    Assigned {
        assignment: RatingAssignment,
        at: Millis,
    },
    Rated {
        record: RatingRecord,
    },
    Flagged {
        note: FlagNote,
    },
}

#[derive(Debug, Clone)]
struct VideoState {
    status: SegmentationStatus,
    round: u32,
    segmentor_id: Option<String>,
    flags: Vec<FlagNote>,
}

/// Picks `k` distinct raters with the smallest current load, ties broken by rater id.
pub fn select_raters(
    pool: &[String],
    loads: &BTreeMap<String, usize>,
    k: usize,
) -> Result<Vec<String>, RatingError> {
    let distinct: BTreeSet<&String> = pool.iter().filter(|r| !r.trim().is_empty()).collect();
    if distinct.len() < k {
        return Err(RatingError::InsufficientRaters {
            needed: k,
            available: distinct.len(),
        });
    }
    let mut ranked: Vec<(usize, &String)> = distinct
        .into_iter()
        .map(|r| (loads.get(r).copied().unwrap_or(0), r))
        .collect();
    ranked.sort();
    Ok(ranked.into_iter().take(k).map(|(_, r)| r.clone()).collect())
}

/// Rating queue, assignments, ratings and segmentation flags.
pub struct RatingDesk {
    catalog: Arc<Catalog>,
    form: RatingForm,
    raters_per_video: usize,
    videos: BTreeMap<VideoKey, VideoState>,
    assignments: BTreeMap<AssignmentId, RatingAssignment>,
    ratings: BTreeMap<AssignmentId, RatingRecord>,
    next_id: u64,
    journal: Option<Journal<DeskEntry>>,
}

impl RatingDesk {
    pub fn in_memory(catalog: Arc<Catalog>, form: RatingForm, raters_per_video: usize) -> Self {
        RatingDesk {
            catalog,
            form,
            raters_per_video: raters_per_video.max(1),
            videos: BTreeMap::new(),
            assignments: BTreeMap::new(),
            ratings: BTreeMap::new(),
            next_id: 1,
            journal: None,
        }
    }

    /// Opens `dir/ratings.jsonl`, replaying any existing entries.
    pub fn open(
        dir: impl AsRef<Path>,
        catalog: Arc<Catalog>,
        form: RatingForm,
        raters_per_video: usize,
    ) -> Result<Self, RatingError> {
        let (journal, entries) = Journal::open(dir.as_ref().join(RATINGS_FILE))?;
        let mut desk = Self::in_memory(catalog, form, raters_per_video);
        for entry in &entries {
            desk.apply(entry);
        }
        desk.journal = Some(journal);
        Ok(desk)
    }

    pub fn form(&self) -> &RatingForm {
        &self.form
    }

    pub fn raters_per_video(&self) -> usize {
        self.raters_per_video
    }

    fn commit(&mut self, entries: Vec<DeskEntry>) -> Result<(), RatingError> {
        if let Some(journal) = &mut self.journal {
            journal.append_all(&entries)?;
        }
        for entry in &entries {
            self.apply(entry);
        }
        Ok(())
    }

    fn apply(&mut self, entry: &DeskEntry) {
        match entry {
            DeskEntry::Registered { video } => {
                self.videos
                    .entry(video.clone())
                    .or_insert_with(|| VideoState {
                        status: SegmentationStatus::Unsegmented,
                        round: 0,
                        segmentor_id: None,
                        flags: Vec::new(),
                    });
            }
            DeskEntry::SegmentationValid {
                video,
                segmentor_id,
                ..
            } => {
                let state = self
                    .videos
                    .entry(video.clone())
                    .or_insert_with(|| VideoState {
                        status: SegmentationStatus::Unsegmented,
                        round: 0,
                        segmentor_id: None,
                        flags: Vec::new(),
                    });
                match state.status {
                    SegmentationStatus::Unsegmented => state.status = SegmentationStatus::Valid,
                    SegmentationStatus::NeedsCorrection => {
                        state.status = SegmentationStatus::Valid;
                        state.round += 1;
                    }
                    SegmentationStatus::Valid => {}
                }
                if segmentor_id.is_some() {
                    state.segmentor_id = segmentor_id.clone();
                }
            }
            DeskEntry::Assigned { assignment, .. } => {
                self.next_id = self.next_id.max(assignment.assignment_id.0 + 1);
                self.assignments
                    .insert(assignment.assignment_id, assignment.clone());
            }
            DeskEntry::Rated { record } => {
                if let Some(a) = self.assignments.get_mut(&record.assignment_id) {
                    a.status = AssignmentStatus::Completed;
                }
                self.ratings.insert(record.assignment_id, record.clone());
            }
            DeskEntry::Flagged { note } => {
                let Some(state) = self.videos.get_mut(&note.video) else {
                    return;
                };
                state.flags.push(note.clone());
                if state.status == SegmentationStatus::Valid {
                    state.status = SegmentationStatus::NeedsCorrection;
                    let round = state.round;
                    for a in self.assignments.values_mut() {
                        if a.video == note.video && a.round == round {
                            a.status = AssignmentStatus::Retired;
                        }
                    }
                }
            }
        }
    }

    /// Records that a task video exists, before it has been segmented.
    pub fn register_video(&mut self, video: VideoKey) -> Result<(), RatingError> {
        self.catalog.task(video.task_number)?;
        if self.videos.contains_key(&video) {
            return Ok(());
        }
        self.commit(vec![DeskEntry::Registered { video }])
    }

    /// Marks a submitted segmentation valid. A flagged video starts a new rating round.
    pub fn record_valid_segmentation(
        &mut self,
        video: VideoKey,
        segmentor_id: Option<String>,
        at: Millis,
    ) -> Result<(), RatingError> {
        self.catalog.task(video.task_number)?;
        self.commit(vec![DeskEntry::SegmentationValid {
            video,
            segmentor_id,
            at,
        }])
    }

    fn load_by_rater(&self) -> BTreeMap<String, usize> {
        let mut loads = BTreeMap::new();
        for a in self.assignments.values() {
            if a.status != AssignmentStatus::Retired {
                *loads.entry(a.rater_id.clone()).or_insert(0) += 1;
            }
        }
        loads
    }

    fn current_round<'a>(
        &'a self,
        video: &'a VideoKey,
    ) -> impl Iterator<Item = &'a RatingAssignment> + 'a {
        let round = self.videos.get(video).map(|s| s.round);
        self.assignments
            .values()
            .filter(move |a| &a.video == video && Some(a.round) == round)
    }

    /// Assigns distinct raters from `pool` to a video with valid segmentation.
    pub fn assign(
        &mut self,
        video: &VideoKey,
        pool: &[String],
        at: Millis,
    ) -> Result<Vec<RatingAssignment>, RatingError> {
        let state = self
            .videos
            .get(video)
            .filter(|s| s.status == SegmentationStatus::Valid)
            .ok_or_else(|| RatingError::NotRatable(video.clone()))?;
        let round = state.round;
        if self
            .current_round(video)
            .any(|a| a.status != AssignmentStatus::Retired)
        {
            return Err(RatingError::AlreadyAssigned(video.clone()));
        }
        let raters = select_raters(pool, &self.load_by_rater(), self.raters_per_video)?;
        let assignments: Vec<RatingAssignment> = raters
            .into_iter()
            .enumerate()
            .map(|(i, rater_id)| RatingAssignment {
                assignment_id: AssignmentId(self.next_id + i as u64),
                video: video.clone(),
                rater_id,
                round,
                status: AssignmentStatus::Pending,
            })
            .collect();
        self.commit(
            assignments
                .iter()
                .map(|a| DeskEntry::Assigned {
                    assignment: a.clone(),
                    at,
                })
                .collect(),
        )?;
        Ok(assignments)
    }

    fn owned_assignment(
        &self,
        rater_id: &str,
        id: AssignmentId,
    ) -> Result<&RatingAssignment, RatingError> {
        let a = self
            .assignments
            .get(&id)
            .ok_or(RatingError::UnknownAssignment(id.0))?;
        if a.rater_id != rater_id {
            return Err(RatingError::NotYourAssignment {
                rater: rater_id.to_string(),
                assignment: id.0,
            });
        }
        Ok(a)
    }

    /// Stores a completed rating. A non-empty `segmentation_problem` also flags the video.
    pub fn submit_rating(
        &mut self,
        rater_id: &str,
        submission: RatingSubmission,
        at: Millis,
    ) -> Result<RatingOutcome, RatingError> {
        let id = submission.assignment_id;
        let a = self.owned_assignment(rater_id, id)?;
        match a.status {
            AssignmentStatus::Completed => return Err(RatingError::AlreadyCompleted(id.0)),
            AssignmentStatus::Retired => return Err(RatingError::AssignmentRetired(id.0)),
            AssignmentStatus::Pending => {}
        }
        let video = a.video.clone();
        let task = self.catalog.task(video.task_number)?;
        let answers = self
            .form
            .check_answers(task, submission.task_score, &submission.answers)?;
        let mut entries = vec![DeskEntry::Rated {
            record: RatingRecord {
                assignment_id: id,
                rater_id: rater_id.to_string(),
                task_score: submission.task_score,
                answers,
                submitted_at: at,
            },
        }];
        let flag = match submission.segmentation_problem.as_deref().map(str::trim) {
            Some(text) if !text.is_empty() => Some(self.flag_note(rater_id, id, text, None, at)),
            _ => None,
        };
        if let Some(note) = &flag {
            entries.push(DeskEntry::Flagged { note: note.clone() });
        }
        self.commit(entries)?;
        Ok(RatingOutcome {
            assignment_id: id,
            fully_rated: self.is_fully_rated(&video),
            video,
            flag,
        })
    }

    fn flag_note(
        &self,
        rater_id: &str,
        id: AssignmentId,
        text: &str,
        slot: Option<SegmentSlot>,
        at: Millis,
    ) -> FlagNote {
        let video = self.assignments[&id].video.clone();
        FlagNote {
            assignment_id: id,
            rater_id: rater_id.to_string(),
            segmentor_id: self.videos.get(&video).and_then(|s| s.segmentor_id.clone()),
            video,
            slot,
            text: text.to_string(),
            at,
        }
    }

    /// Sends the video back to its segmentor and retires the current round's assignments.
    pub fn flag_segmentation_problem(
        &mut self,
        rater_id: &str,
        id: AssignmentId,
        text: &str,
        slot: Option<SegmentSlot>,
        at: Millis,
    ) -> Result<FlagNote, RatingError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(RatingError::EmptyFeedback);
        }
        let a = self.owned_assignment(rater_id, id)?;
        let state = &self.videos[&a.video];
        if a.round != state.round && state.status == SegmentationStatus::Valid {
            return Err(RatingError::AssignmentRetired(id.0));
        }
        if let Some(slot) = slot {
            let task = self.catalog.task(a.video.task_number)?;
            if !task.contains(slot) {
                return Err(RatingError::BadAnswer {
                    question: "slot".into(),
                    reason: format!("{slot} not in task {}", a.video.task_number),
                });
            }
        }
        let note = self.flag_note(rater_id, id, text, slot, at);
        self.commit(vec![DeskEntry::Flagged { note: note.clone() }])?;
        Ok(note)
    }

    pub fn is_fully_rated(&self, video: &VideoKey) -> bool {
        self.videos
            .get(video)
            .is_some_and(|s| s.status == SegmentationStatus::Valid)
            && self
                .current_round(video)
                .filter(|a| a.status == AssignmentStatus::Completed)
                .count()
                >= self.raters_per_video
    }

    /// Valid videos still waiting for ratings, in key order.
    pub fn ratable_queue(&self) -> Vec<VideoKey> {
        self.videos
            .iter()
            .filter(|(v, s)| s.status == SegmentationStatus::Valid && !self.is_fully_rated(v))
            .map(|(v, _)| v.clone())
            .collect()
    }

    /// Valid videos with no active assignment in their current round.
    pub fn unassigned(&self) -> Vec<VideoKey> {
        self.videos
            .iter()
            .filter(|(v, s)| {
                s.status == SegmentationStatus::Valid
                    && !self
                        .current_round(v)
                        .any(|a| a.status != AssignmentStatus::Retired)
            })
            .map(|(v, _)| v.clone())
            .collect()
    }

    /// A rater's open work. Only their own assignments are visible.
    pub fn pending_for(&self, rater_id: &str) -> Vec<RatingAssignment> {
        self.assignments
            .values()
            .filter(|a| a.rater_id == rater_id && a.status == AssignmentStatus::Pending)
            .cloned()
            .collect()
    }

    pub fn assignment(&self, id: AssignmentId) -> Option<&RatingAssignment> {
        self.assignments.get(&id)
    }

    pub fn assignments(&self) -> impl Iterator<Item = &RatingAssignment> {
        self.assignments.values()
    }

    pub fn rating(&self, id: AssignmentId) -> Option<&RatingRecord> {
        self.ratings.get(&id)
    }

    pub fn flags(&self, video: &VideoKey) -> &[FlagNote] {
        self.videos.get(video).map_or(&[], |s| s.flags.as_slice())
    }

    pub fn video_status(&self, video: &VideoKey) -> Option<VideoStatus> {
        let s = self.videos.get(video)?;
        Some(VideoStatus {
            video: video.clone(),
            segmentation: s.status,
            round: s.round,
            completed_ratings: self
                .current_round(video)
                .filter(|a| a.status == AssignmentStatus::Completed)
                .count(),
            fully_rated: self.is_fully_rated(video),
            flags: s.flags.len(),
        })
    }

    pub fn progress(&self) -> ProgressReport {
        let segmented = self
            .videos
            .values()
            .filter(|s| s.status != SegmentationStatus::Unsegmented)
            .count();
        let fully = self
            .videos
            .keys()
            .filter(|v| self.is_fully_rated(v))
            .count();
        let flagged = self.videos.values().filter(|s| !s.flags.is_empty()).count();
        let pct = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                100.0 * num as f64 / den as f64
            }
        };
        ProgressReport {
            videos_total: self.videos.len(),
            videos_segmented: segmented,
            videos_fully_rated: fully,
            videos_flagged: flagged,
            percent_rated: pct(fully, segmented),
            percent_flagged: pct(flagged, fully),
            empty: segmented == 0,
        }
    }
}

/// Completed ratings as CSV, one row per rating, one column per form question.
pub fn ratings_csv_string(desk: &RatingDesk) -> String {
    let questions: Vec<&str> = desk.form.questions.iter().map(|q| q.id.as_str()).collect();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec![
        "assignment_id",
        "patient_id",
        "hand",
        "task_number",
        "rater_id",
        "round",
        "status",
        "submitted_at_ms",
    ];
    header.extend(&questions);
    w.write_record(&header).expect("in-memory write");
    for record in desk.ratings.values() {
        let a = &desk.assignments[&record.assignment_id];
        let mut row = vec![
            a.assignment_id.to_string(),
            a.video.patient_id.clone(),
            a.video.hand.to_string(),
            a.video.task_number.to_string(),
            a.rater_id.clone(),
            a.round.to_string(),
            serde_json::to_value(a.status)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
            record.submitted_at.0.to_string(),
        ];
        for q in &questions {
            row.push(match record.answers.get(*q) {
                Some(Answer::Ordinal(v)) => v.to_string(),
                Some(Answer::Boolean(b)) => b.to_string(),
                Some(Answer::Text(t)) => t.clone(),
                None => String::new(),
            });
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
}
