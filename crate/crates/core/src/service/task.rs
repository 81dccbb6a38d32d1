//! Task descriptors served to the rater UI. Statement and issue texts come
//! straight from the taxonomy so the UI never has to supply its own.

use super::intro::{AdmissionItem, TutorialItem};
use super::state::Assignment;
use super::{AssignmentId, AssistanceMode, StudyConfig};
use crate::domain::{AnswerId, Dimension, Family, StudyId};
use crate::pipeline::{AnswerBundle, Critique, NO_CRITIQUE};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum NextStep {
    Screening,
    Rate { dimension: Dimension },
    LabelKeypoints,
    Complete,
    ScreenedOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueView {
    pub id: String,
    pub label: String,
    pub allows_free_text: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssistanceView {
    /// The critique, or the "No Critique" sentinel.
    pub text: String,
    pub no_critique: bool,
    pub grounded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionTask {
    pub dimension: Dimension,
    pub family: Family,
    pub statement: String,
    pub allows_dont_know: bool,
    pub issues: Vec<IssueView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assistance: Option<AssistanceView>,
}

impl DimensionTask {
    pub fn new(dimension: Dimension, assistance: Option<AssistanceView>) -> Self {
        DimensionTask {
            dimension,
            family: dimension.family(),
            statement: dimension.statement().to_string(),
            allows_dont_know: dimension.is_epistemological(),
            issues: dimension
                .issues()
                .map(|t| IssueView { id: t.id.into(), label: t.label.into(), allows_free_text: t.allows_free_text })
                .collect(),
            assistance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingTask {
    pub assignment_id: AssignmentId,
    pub study_id: StudyId,
    pub answer_id: AnswerId,
    pub question: String,
    pub answer: String,
    pub screening_questions: Vec<String>,
    pub next: NextStep,
    pub dimensions: Vec<DimensionTask>,
}

impl RatingTask {
    pub(super) fn new(a: &Assignment, config: &StudyConfig, bundle: &AnswerBundle) -> Self {
        let show = config.assistance_mode == AssistanceMode::Shown;
        let dimensions = Dimension::ALL
            .into_iter()
            .map(|d| {
                let assistance = bundle.assistance_for(d).filter(|_| show).map(|a| AssistanceView {
                    text: a.critique.text().unwrap_or(NO_CRITIQUE).to_string(),
                    no_critique: a.critique == Critique::NoCritique,
                    grounded: a.grounded,
                });
                DimensionTask::new(d, assistance)
            })
            .collect();
        RatingTask {
            assignment_id: a.id.clone(),
            study_id: a.study_id.clone(),
            answer_id: a.answer_id.clone(),
            question: bundle.question.clone(),
            answer: bundle.answer.clone().unwrap_or_default(),
            screening_questions: config.screening_questions.clone(),
            next: a.next_step(),
            dimensions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeypointView {
    pub index: usize,
    pub text: String,
    /// Up to three evidence paragraphs, best first.
    pub passages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AisTask {
    pub assignment_id: AssignmentId,
    pub study_id: StudyId,
    pub answer_id: AnswerId,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
    pub keypoints: Vec<KeypointView>,
}

impl AisTask {
    pub(super) fn new(a: &Assignment, bundle: &AnswerBundle) -> Self {
        AisTask {
            assignment_id: a.id.clone(),
            study_id: a.study_id.clone(),
            answer_id: a.answer_id.clone(),
            question: bundle.question.clone(),
            answer: bundle.answer.clone().unwrap_or_default(),
            source_url: bundle.article.as_ref().map(|art| art.url.clone()),
            keypoints: bundle
                .keypoints
                .iter()
                .map(|k| KeypointView {
                    index: k.index,
                    text: k.text.clone(),
                    passages: bundle
                        .evidence_for(k.index)
                        .map(|e| e.passages.iter().map(|p| p.text.clone()).collect())
                        .unwrap_or_default(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TutorialView {
    pub item_id: String,
    /// 0-based position among the tutorial items.
    pub position: usize,
    pub total: usize,
    pub question: String,
    pub answer: String,
    pub dimension: DimensionTask,
}

impl TutorialView {
    pub fn new(item: &TutorialItem, position: usize, total: usize) -> Self {
        TutorialView {
            item_id: item.id.clone(),
            position,
            total,
            question: item.question.clone(),
            answer: item.answer.clone(),
            dimension: DimensionTask::new(item.dimension, None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionItemView {
    pub item_id: String,
    pub question: String,
    pub answer: String,
}

impl From<&AdmissionItem> for AdmissionItemView {
    fn from(item: &AdmissionItem) -> Self {
        AdmissionItemView { item_id: item.id.clone(), question: item.question.clone(), answer: item.answer.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Tutorial(TutorialView),
    Admission { items: Vec<AdmissionItemView> },
    Rating(RatingTask),
    Ais(AisTask),
}
