use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::RatingError;
use crate::catalog::{SegmentKind, TaskDefinition};
use crate::common::MAX_SCORE;

pub const FORM_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerType {
    /// Integer 0-3.
    Ordinal,
    Boolean,
    FreeText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskScope {
    Task,
}

/// What a question is asked about: the whole task, or segments of the listed kinds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AppliesTo {
    Scope(TaskScope),
    Kinds(BTreeSet<SegmentKind>),
}

impl AppliesTo {
    pub fn is_task(&self) -> bool {
        matches!(self, AppliesTo::Scope(TaskScope::Task))
    }

    fn applies(&self, task_kinds: &BTreeSet<SegmentKind>) -> bool {
        match self {
            AppliesTo::Scope(TaskScope::Task) => true,
            AppliesTo::Kinds(kinds) => !kinds.is_disjoint(task_kinds),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub applies_to: AppliesTo,
    pub prompt: String,
    pub answer_type: AnswerType,
    #[serde(default = "yes")]
    pub required: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Boolean(bool),
    Ordinal(u8),
    Text(String),
}

/// The questionnaire raters fill in for each task video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingForm {
    pub schema_version: u32,
    pub version: String,
    /// Task-level ordinal question holding the 0-3 task score. Defaults to the first one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_question: Option<String>,
    pub questions: Vec<Question>,
}

impl RatingForm {
    pub fn from_json(source: &str) -> Result<Self, RatingError> {
        let form: RatingForm =
            serde_json::from_str(source).map_err(|e| RatingError::InvalidForm(e.to_string()))?;
        form.validate()?;
        Ok(form)
    }

    pub fn validate(&self) -> Result<(), RatingError> {
        if self.schema_version != FORM_SCHEMA_VERSION {
            return Err(RatingError::InvalidForm(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        let mut ids = BTreeSet::new();
        for q in &self.questions {
            if q.id.trim().is_empty() {
                return Err(RatingError::InvalidForm("empty question id".into()));
            }
            if !ids.insert(q.id.as_str()) {
                return Err(RatingError::InvalidForm(format!(
                    "duplicate question id `{}`",
                    q.id
                )));
            }
        }
        let score = self.score_question_id().ok_or_else(|| {
            RatingError::InvalidForm("form needs a task-level ordinal question".into())
        })?;
        let q = self
            .questions
            .iter()
            .find(|q| q.id == score)
            .ok_or_else(|| RatingError::InvalidForm(format!("unknown score question `{score}`")))?;
        if !(q.applies_to.is_task() && q.answer_type == AnswerType::Ordinal) {
            return Err(RatingError::InvalidForm(format!(
                "score question `{score}` must be a task-level ordinal"
            )));
        }
        Ok(())
    }

    pub fn score_question_id(&self) -> Option<&str> {
        self.score_question.as_deref().or_else(|| {
            self.questions
                .iter()
                .find(|q| q.applies_to.is_task() && q.answer_type == AnswerType::Ordinal)
                .map(|q| q.id.as_str())
        })
    }

    /// Questions shown for `task`, in form order.
    pub fn questions_for<'a>(
        &'a self,
        task: &TaskDefinition,
    ) -> impl Iterator<Item = &'a Question> {
        let kinds = task.kinds();
        self.questions
            .iter()
            .filter(move |q| q.applies_to.applies(&kinds))
    }

    /// Checks answers for `task` and returns them with the task score filled in.
    pub fn check_answers(
        &self,
        task: &TaskDefinition,
        task_score: u8,
        answers: &BTreeMap<String, Answer>,
    ) -> Result<BTreeMap<String, Answer>, RatingError> {
        if task_score > MAX_SCORE {
            return Err(RatingError::ScoreOutOfRange(task_score));
        }
        let score_id = self.score_question_id().unwrap_or_default().to_string();
        let mut out = answers.clone();
        match out.get(&score_id) {
            Some(Answer::Ordinal(v)) if *v != task_score => {
                return Err(RatingError::BadAnswer {
                    question: score_id,
                    reason: format!("disagrees with task_score {task_score}"),
                })
            }
            _ => {
                out.insert(score_id, Answer::Ordinal(task_score));
            }
        }

        let applicable: Vec<&Question> = self.questions_for(task).collect();
        for id in out.keys() {
            if !applicable.iter().any(|q| &q.id == id) {
                return Err(RatingError::BadAnswer {
                    question: id.clone(),
                    reason: "not asked for this task".into(),
                });
            }
        }
        for q in applicable {
            match (out.get(&q.id), q.answer_type) {
                (None, _) if q.required => return Err(RatingError::MissingAnswer(q.id.clone())),
                (None, _) => {}
                (Some(Answer::Ordinal(v)), AnswerType::Ordinal) if *v <= MAX_SCORE => {}
                (Some(Answer::Ordinal(v)), AnswerType::Ordinal) => {
                    return Err(RatingError::BadAnswer {
                        question: q.id.clone(),
                        reason: format!("{v} outside 0-3"),
                    })
                }
                (Some(Answer::Boolean(_)), AnswerType::Boolean) => {}
                (Some(Answer::Text(t)), AnswerType::FreeText) => {
                    if q.required && t.trim().is_empty() {
                        return Err(RatingError::MissingAnswer(q.id.clone()));
                    }
                }
                (Some(_), expected) => {
                    return Err(RatingError::BadAnswer {
                        question: q.id.clone(),
                        reason: format!("expected a {expected:?} answer"),
                    })
                }
            }
        }
        Ok(out)
    }
}

impl Default for RatingForm {
    /// One task score, one 0-3 quality question per segment kind and an optional component note.
    fn default() -> Self {
        let mut questions = vec![Question {
            id: "task_score".into(),
            applies_to: AppliesTo::Scope(TaskScope::Task),
            prompt: "ARAT score for the task (0-3)".into(),
            answer_type: AnswerType::Ordinal,
            required: true,
        }];
        for kind in SegmentKind::ALL {
            questions.push(Question {
                id: format!("segment_{}", kind.as_str().to_ascii_lowercase()),
                applies_to: AppliesTo::Kinds([kind].into_iter().collect()),
                prompt: format!("Movement quality of the {kind} segment (0-3)"),
                answer_type: AnswerType::Ordinal,
                required: true,
            });
        }
        questions.push(Question {
            id: "component_note".into(),
            applies_to: AppliesTo::Scope(TaskScope::Task),
            prompt: "Notes on movement components (trunk, shoulder, elbow, wrist, fingers)".into(),
            answer_type: AnswerType::FreeText,
            required: false,
        });
        RatingForm {
            schema_version: FORM_SCHEMA_VERSION,
            version: "v1".into(),
            score_question: None,
            questions,
        }
    }
}
