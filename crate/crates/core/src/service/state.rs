use super::intro::AdmissionAttempt;
use super::task::NextStep;
use super::{AisRecord, AisSubmission, AssignmentId, Event, EventBody, StudyConfig, TaskFlow};
use crate::domain::{
    AnswerId, Dimension, DimensionRating, LikertValue, RaterId, RatingRecord, ScreeningResult, StudyId,
};
use crate::pipeline::AnswerBundle;
use chrono::{DateTime, Utc};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentState {
    Issued,
    ScreenedOut,
    Completed,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    pub id: AssignmentId,
    pub study_id: StudyId,
    pub answer_id: AnswerId,
    pub rater_id: RaterId,
    pub kind: TaskFlow,
    pub state: AssignmentState,
    pub issued_at: DateTime<Utc>,
    /// Last accepted submission, used for idle expiry.
    pub updated_at: DateTime<Utc>,
    pub screening: Option<ScreeningResult>,
    pub ratings: Vec<DimensionRating>,
    pub feedback: BTreeMap<Dimension, LikertValue>,
    pub ais: Option<AisSubmission>,
    pub completed_at: Option<DateTime<Utc>>,
}

impl Assignment {
    pub fn next_step(&self) -> NextStep {
        match self.state {
            AssignmentState::ScreenedOut => NextStep::ScreenedOut,
            AssignmentState::Completed => NextStep::Complete,
            _ if self.kind == TaskFlow::Ais => NextStep::LabelKeypoints,
            _ if self.screening.is_none() => NextStep::Screening,
            _ => match Dimension::ALL.get(self.ratings.len()) {
                Some(&dimension) => NextStep::Rate { dimension },
                None => NextStep::Complete,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyState {
    pub config: StudyConfig,
    pub bundles: Vec<AnswerBundle>,
    pub closed: bool,
    pub assignment_ids: Vec<AssignmentId>,
}

impl StudyState {
    pub fn bundle(&self, answer_id: &AnswerId) -> Option<&AnswerBundle> {
        self.bundles.iter().find(|b| &b.answer_id == answer_id)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RaterState {
    pub tutorial_passed: BTreeSet<String>,
    pub tutorial_attempts: usize,
    pub admission: Option<AdmissionAttempt>,
    pub admitted: bool,
}

/// Everything derivable from the event log.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ServiceState {
    pub studies: BTreeMap<StudyId, StudyState>,
    pub study_order: Vec<StudyId>,
    pub raters: BTreeMap<RaterId, RaterState>,
    pub assignments: BTreeMap<AssignmentId, Assignment>,
    /// Answers each rater has been shown, across all studies.
    pub exposures: BTreeMap<RaterId, BTreeSet<AnswerId>>,
    pub last_seq: u64,
}

impl ServiceState {
    pub fn replay(events: &[Event]) -> Result<ServiceState, String> {
        let mut state = ServiceState::default();
        for e in events {
            state.apply(e)?;
        }
        Ok(state)
    }

    /// Assignments holding a quota slot (issued or completed).
    pub fn active_count(&self, study: &StudyId, answer: &AnswerId) -> usize {
        self.studies[study]
            .assignment_ids
            .iter()
            .map(|id| &self.assignments[id])
            .filter(|a| &a.answer_id == answer)
            .filter(|a| matches!(a.state, AssignmentState::Issued | AssignmentState::Completed))
            .count()
    }

    fn assignment(&mut self, id: &AssignmentId, seq: u64) -> Result<&mut Assignment, String> {
        self.assignments.get_mut(id).ok_or_else(|| format!("event {seq}: unknown assignment `{id}`"))
    }

    /// Applies one event. Events are trusted to have been validated when they
    /// were emitted; only structural consistency is checked here.
    pub fn apply(&mut self, event: &Event) -> Result<(), String> {
        let seq = event.seq;
        if seq != self.last_seq + 1 {
            return Err(format!("expected seq {}, found {seq}", self.last_seq + 1));
        }
        let now = event.server_time;
        match &event.body {
            EventBody::StudyCreated { config, bundles } => {
                if self.studies.contains_key(&config.id) {
                    return Err(format!("event {seq}: study `{}` created twice", config.id));
                }
                self.study_order.push(config.id.clone());
                self.studies.insert(
                    config.id.clone(),
                    StudyState { config: config.clone(), bundles: bundles.clone(), closed: false, assignment_ids: Vec::new() },
                );
            }
            EventBody::StudyClosed { study_id } => {
                self.studies.get_mut(study_id).ok_or_else(|| format!("event {seq}: unknown study"))?.closed = true;
            }
            EventBody::RaterAdmitted { rater_id } => {
                self.raters.entry(rater_id.clone()).or_default().admitted = true;
            }
            EventBody::TutorialAnswered { rater_id, item_id, advanced } => {
                let r = self.raters.entry(rater_id.clone()).or_default();
                r.tutorial_attempts += 1;
                if *advanced {
                    r.tutorial_passed.insert(item_id.clone());
                }
            }
            EventBody::AdmissionScored { attempt } => {
                let r = self.raters.entry(attempt.rater_id.clone()).or_default();
                r.admitted |= attempt.passed;
                r.admission = Some(attempt.clone());
            }
            EventBody::AssignmentIssued { assignment_id, study_id, answer_id, rater_id, kind } => {
                let study =
                    self.studies.get_mut(study_id).ok_or_else(|| format!("event {seq}: unknown study `{study_id}`"))?;
                study.assignment_ids.push(assignment_id.clone());
                self.exposures.entry(rater_id.clone()).or_default().insert(answer_id.clone());
                self.assignments.insert(
                    assignment_id.clone(),
                    Assignment {
                        id: assignment_id.clone(),
                        study_id: study_id.clone(),
                        answer_id: answer_id.clone(),
                        rater_id: rater_id.clone(),
                        kind: *kind,
                        state: AssignmentState::Issued,
                        issued_at: now,
                        updated_at: now,
                        screening: None,
                        ratings: Vec::new(),
                        feedback: BTreeMap::new(),
                        ais: None,
                        completed_at: None,
                    },
                );
            }
            EventBody::AssignmentExpired { assignment_id } => {
                let a = self.assignment(assignment_id, seq)?;
                a.state = AssignmentState::Expired;
                a.updated_at = now;
            }
            EventBody::ScreeningSubmitted { assignment_id, result } => {
                let a = self.assignment(assignment_id, seq)?;
                a.screening = Some(result.clone());
                a.updated_at = now;
                if !result.passed {
                    a.state = AssignmentState::ScreenedOut;
                    a.completed_at = Some(now);
                }
            }
            EventBody::DimensionRated { assignment_id, rating } => {
                let a = self.assignment(assignment_id, seq)?;
                a.ratings.push(rating.clone());
                a.updated_at = now;
                if a.ratings.len() == Dimension::ALL.len() {
                    a.state = AssignmentState::Completed;
                    a.completed_at = Some(now);
                }
            }
            EventBody::AssistanceFeedback { assignment_id, dimension, helpfulness } => {
                let a = self.assignment(assignment_id, seq)?;
                a.feedback.insert(*dimension, *helpfulness);
                a.updated_at = now;
            }
            EventBody::AisSubmitted { assignment_id, submission } => {
                let a = self.assignment(assignment_id, seq)?;
                a.ais = Some(submission.clone());
                a.state = AssignmentState::Completed;
                a.updated_at = now;
                a.completed_at = Some(now);
            }
        }
        self.last_seq = seq;
        Ok(())
    }

    /// Completed and screened-out rating assignments as records, in issue
    /// order, with separately submitted helpfulness merged in.
    pub fn records(&self, study_id: &StudyId) -> Vec<RatingRecord> {
        let Some(study) = self.studies.get(study_id) else { return Vec::new() };
        study
            .assignment_ids
            .iter()
            .map(|id| &self.assignments[id])
            .filter(|a| a.kind == TaskFlow::Rating)
            .filter(|a| matches!(a.state, AssignmentState::Completed | AssignmentState::ScreenedOut))
            .map(|a| {
                let bundle = study.bundle(&a.answer_id);
                let dimension_ratings = a
                    .ratings
                    .iter()
                    .map(|r| {
                        let mut r = r.clone();
                        if let Some(h) = a.feedback.get(&r.dimension) {
                            r.assistance_helpfulness = Some(*h);
                        }
                        r
                    })
                    .collect();
                RatingRecord {
                    study_id: study_id.clone(),
                    question_id: bundle.map(|b| b.question_id.clone()).unwrap_or_default(),
                    answer_id: a.answer_id.clone(),
                    system_id: bundle.map(|b| b.system_id.clone()).unwrap_or_default(),
                    rater_id: a.rater_id.clone(),
                    screening: a.screening.clone().expect("finished rating assignment has screening"),
                    dimension_ratings,
                    created_at: a.completed_at.unwrap_or(a.updated_at),
                }
            })
            .collect()
    }

    pub fn ais_records(&self, study_id: &StudyId) -> Vec<AisRecord> {
        let Some(study) = self.studies.get(study_id) else { return Vec::new() };
        study
            .assignment_ids
            .iter()
            .map(|id| &self.assignments[id])
            .filter_map(|a| {
                let submission = a.ais.as_ref()?;
                Some(AisRecord {
                    study_id: study_id.clone(),
                    answer_id: a.answer_id.clone(),
                    system_id: study.bundle(&a.answer_id).map(|b| b.system_id.clone()).unwrap_or_default(),
                    rater_id: a.rater_id.clone(),
                    labels: submission.labels.clone(),
                    created_at: a.completed_at.unwrap_or(a.updated_at),
                })
            })
            .collect()
    }
}
