//! Event-sourced rating service: studies, assignments, screening, dimension
//! ratings, assistance feedback, attribution labels, tutorial and admission.
//!
//! Every mutation is validated against the current state, appended to the
//! event log and only then applied, so replaying the log from empty
//! reconstructs the state exactly.

mod event;
mod intro;
mod simulate;
mod state;
mod task;


pub use event::{read_events, write_events, Event, EventBody, EventLog};
pub use intro::{
    default_tutorial, score_admission, tutorial_step, AdmissionAttempt, AdmissionItem, AdmissionItemResponse,
    AdmissionRubric, AdmissionWeights, ExpectedIssue, ItemOutcome, TutorialItem, TutorialOutcome,
};
pub use simulate::{simulate_study, SimulatedSystem, SimulationSpec};
pub use state::{Assignment, AssignmentState, RaterState, ServiceState, StudyState};
pub use task::{
    AdmissionItemView, AisTask, AssistanceView, DimensionTask, IssueView, KeypointView, NextStep, RatingTask,
    Task, TutorialView,
};

use crate::domain::{
    validate_rating, AnswerId, Dimension, DimensionRating, KeypointSupport, LikertValue, RaterId, RatingRecord,
    RatingViolation, ScreeningResult, StudyId, SystemId,
};
use crate::pipeline::{AnswerBundle, BundleStatus};
use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

pub type AssignmentId = String;

pub const DEFAULT_RATERS_PER_ANSWER: usize = 3;
pub const DEFAULT_EXPIRY_SECS: u64 = 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssistanceMode {
    Shown,
    Hidden,
}

impl std::str::FromStr for AssistanceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "shown" => Ok(AssistanceMode::Shown),
            "hidden" => Ok(AssistanceMode::Hidden),
            other => Err(format!("unknown assistance mode `{other}` (expected shown or hidden)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFlow {
    #[default]
    Rating,
    Ais,
}

pub fn default_screening_questions() -> Vec<String> {
    vec![
        "Do you understand the question?".into(),
        "Does the answer respond to this question?".into(),
        "Are you able to judge the answer, if necessary after briefly consulting a reliable source?".into(),
    ]
}

fn default_raters() -> usize {
    DEFAULT_RATERS_PER_ANSWER
}

fn default_expiry() -> u64 {
    DEFAULT_EXPIRY_SECS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub id: StudyId,
    #[serde(default)]
    pub name: String,
    pub assistance_mode: AssistanceMode,
    #[serde(default = "default_raters")]
    pub raters_per_answer: usize,
    #[serde(default)]
    pub flow: TaskFlow,
    #[serde(default = "default_screening_questions")]
    pub screening_questions: Vec<String>,
    /// Idle seconds after which an issued assignment returns to the queue.
    #[serde(default = "default_expiry")]
    pub expiry_secs: u64,
}

impl StudyConfig {
    pub fn new(id: impl Into<StudyId>, assistance_mode: AssistanceMode) -> Self {
        StudyConfig {
            id: id.into(),
            name: String::new(),
            assistance_mode,
            raters_per_answer: DEFAULT_RATERS_PER_ANSWER,
            flow: TaskFlow::Rating,
            screening_questions: default_screening_questions(),
            expiry_secs: DEFAULT_EXPIRY_SECS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointLabel {
    pub index: usize,
    pub label: KeypointSupport,
    /// Whether the passages jointly support the keypoint, when asked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_support: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AisSubmission {
    pub labels: Vec<KeypointLabel>,
}

/// A completed attribution labeling, flattened for analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AisRecord {
    pub study_id: StudyId,
    pub answer_id: AnswerId,
    pub system_id: SystemId,
    pub rater_id: RaterId,
    pub labels: Vec<KeypointLabel>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("rater `{0}` is not admitted")]
    NotAdmitted(RaterId),
    #[error("study `{0}` is closed")]
    StudyClosed(StudyId),
    #[error("unknown study `{0}`")]
    UnknownStudy(StudyId),
    #[error("study `{0}` already exists")]
    DuplicateStudy(StudyId),
    #[error("invalid study: {0}")]
    InvalidStudy(String),
    #[error("unknown assignment `{0}`")]
    UnknownAssignment(AssignmentId),
    #[error("assignment `{0}` belongs to another rater")]
    WrongRater(AssignmentId),
    #[error("assignment `{0}` no longer accepts this submission")]
    StaleAssignment(AssignmentId),
    #[error("expected {expected} screening answers, got {got}")]
    InvalidScreening { expected: usize, got: usize },
    #[error("expected {expected}, got {got}")]
    OutOfOrder { expected: String, got: String },
    #[error("dimension {0} was already submitted")]
    DuplicateDimension(Dimension),
    #[error("no assistance was shown for {0}")]
    AssistanceNotShown(Dimension),
    #[error(transparent)]
    InvalidRating(#[from] RatingViolation),
    #[error("keypoint {0} has no label")]
    MissingKeypointLabel(usize),
    #[error("keypoint {0} does not exist")]
    UnknownKeypoint(usize),
    #[error("keypoint {0} is labeled twice")]
    DuplicateKeypointLabel(usize),
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("assignment `{0}` is not a task of this kind")]
    WrongTaskKind(AssignmentId),
    #[error("event log: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt event log: {0}")]
    CorruptLog(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotAdmitted(_) => "not_admitted",
            ServiceError::StudyClosed(_) => "study_closed",
            ServiceError::UnknownStudy(_) => "unknown_study",
            ServiceError::DuplicateStudy(_) => "duplicate_study",
            ServiceError::InvalidStudy(_) => "invalid_study",
            ServiceError::UnknownAssignment(_) => "unknown_assignment",
            ServiceError::WrongRater(_) => "wrong_rater",
            ServiceError::StaleAssignment(_) => "stale_assignment",
            ServiceError::InvalidScreening { .. } => "invalid_screening",
            ServiceError::OutOfOrder { .. } => "out_of_order",
            ServiceError::DuplicateDimension(_) => "duplicate_dimension",
            ServiceError::AssistanceNotShown(_) => "assistance_not_shown",
            ServiceError::InvalidRating(v) => v.code(),
            ServiceError::MissingKeypointLabel(_) => "missing_keypoint_label",
            ServiceError::UnknownKeypoint(_) => "unknown_keypoint",
            ServiceError::DuplicateKeypointLabel(_) => "duplicate_keypoint_label",
            ServiceError::UnknownItem(_) => "unknown_item",
            ServiceError::WrongTaskKind(_) => "wrong_task_kind",
            ServiceError::Io(_) => "io_error",
            ServiceError::CorruptLog(_) => "corrupt_log",
        }
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Settable clock for tests and replays; starts at the Unix epoch.
#[derive(Debug, Default)]
pub struct ManualClock {
    millis: AtomicI64,
}

impl ManualClock {
    pub fn at(time: DateTime<Utc>) -> Self {
        ManualClock { millis: AtomicI64::new(time.timestamp_millis()) }
    }

    pub fn advance(&self, by: Duration) {
        self.millis.fetch_add(by.num_milliseconds(), Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        DateTime::from_timestamp_millis(self.millis.load(Ordering::SeqCst)).unwrap_or_default()
    }
}

impl<C: Clock + ?Sized> Clock for Arc<C> {
    fn now(&self) -> DateTime<Utc> {
        (**self).now()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerProgress {
    pub answer_id: AnswerId,
    pub completed: usize,
    pub issued: usize,
    pub screened_out: usize,
    pub expired: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyStatus {
    pub study_id: StudyId,
    pub name: String,
    pub assistance_mode: AssistanceMode,
    pub flow: TaskFlow,
    pub raters_per_answer: usize,
    pub closed: bool,
    pub answers: usize,
    pub answers_complete: usize,
    pub completed: usize,
    pub issued: usize,
    pub screened_out: usize,
    pub expired: usize,
    pub complete: bool,
    pub per_answer: Vec<AnswerProgress>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingAck {
    pub assignment_id: AssignmentId,
    pub next: NextStep,
}

/// Whether a bundle can be served under a flow.
fn servable(bundle: &AnswerBundle, flow: TaskFlow) -> bool {
    bundle.answer.is_some()
        && bundle.status != BundleStatus::Failed
        && (flow == TaskFlow::Rating || !bundle.keypoints.is_empty())
}

pub struct RatingService {
    state: ServiceState,
    events: Vec<Event>,
    log: Option<EventLog>,
    clock: Box<dyn Clock>,
    tutorial: Vec<TutorialItem>,
    rubric: AdmissionRubric,
}

impl RatingService {
    /// In-memory service with no backing file.
    pub fn new(clock: impl Clock + 'static) -> Self {
        RatingService {
            state: ServiceState::default(),
            events: Vec::new(),
            log: None,
            clock: Box::new(clock),
            tutorial: default_tutorial(),
            rubric: AdmissionRubric::default(),
        }
    }

    /// Opens a log file and replays it.
    pub fn open(path: impl AsRef<Path>, clock: impl Clock + 'static) -> Result<Self, ServiceError> {
        let (log, events) = EventLog::open(path)?;
        let mut service = Self::new(clock);
        service.state = ServiceState::replay(&events).map_err(ServiceError::CorruptLog)?;
        service.events = events;
        service.log = Some(log);
        Ok(service)
    }

    /// In-memory service reconstructed from events.
    pub fn from_events(events: Vec<Event>, clock: impl Clock + 'static) -> Result<Self, ServiceError> {
        let mut service = Self::new(clock);
        service.state = ServiceState::replay(&events).map_err(ServiceError::CorruptLog)?;
        service.events = events;
        Ok(service)
    }

    pub fn with_tutorial(mut self, items: Vec<TutorialItem>) -> Self {
        self.tutorial = items;
        self
    }

    pub fn with_rubric(mut self, rubric: AdmissionRubric) -> Self {
        self.rubric = rubric;
        self
    }

    pub fn state(&self) -> &ServiceState {
        &self.state
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn tutorial(&self) -> &[TutorialItem] {
        &self.tutorial
    }

    pub fn rubric(&self) -> &AdmissionRubric {
        &self.rubric
    }

    fn emit(&mut self, body: EventBody) -> Result<(), ServiceError> {
        let event = Event { seq: self.state.last_seq + 1, body, server_time: self.clock.now() };
        if let Some(log) = self.log.as_mut() {
            log.append(&event)?;
        }
        self.state.apply(&event).map_err(ServiceError::CorruptLog)?;
        self.events.push(event);
        Ok(())
    }

    pub fn create_study(&mut self, config: StudyConfig, bundles: Vec<AnswerBundle>) -> Result<(), ServiceError> {
        if self.state.studies.contains_key(&config.id) {
            return Err(ServiceError::DuplicateStudy(config.id));
        }
        if config.raters_per_answer == 0 {
            return Err(ServiceError::InvalidStudy("raters_per_answer must be at least 1".into()));
        }
        let mut seen = BTreeSet::new();
        for b in &bundles {
            if !seen.insert(&b.answer_id) {
                return Err(ServiceError::InvalidStudy(format!("duplicate answer `{}`", b.answer_id)));
            }
        }
        self.emit(EventBody::StudyCreated { config, bundles })
    }

    pub fn close_study(&mut self, study_id: &StudyId) -> Result<(), ServiceError> {
        let study = self.study(study_id)?;
        if study.closed {
            return Ok(());
        }
        self.emit(EventBody::StudyClosed { study_id: study_id.clone() })
    }

    /// Operator admission that bypasses tutorial and test.
    pub fn admit_rater(&mut self, rater_id: &RaterId) -> Result<(), ServiceError> {
        if self.state.raters.get(rater_id).is_some_and(|r| r.admitted) {
            return Ok(());
        }
        self.emit(EventBody::RaterAdmitted { rater_id: rater_id.clone() })
    }

    fn study(&self, id: &StudyId) -> Result<&StudyState, ServiceError> {
        self.state.studies.get(id).ok_or_else(|| ServiceError::UnknownStudy(id.clone()))
    }

    fn is_admitted(&self, rater: &RaterId) -> bool {
        self.state.raters.get(rater).is_some_and(|r| r.admitted)
    }

    fn expire_idle(&mut self) -> Result<(), ServiceError> {
        let now = self.clock.now();
        let idle: Vec<AssignmentId> = self
            .state
            .assignments
            .values()
            .filter(|a| a.state == AssignmentState::Issued)
            .filter(|a| {
                let expiry = self.state.studies[&a.study_id].config.expiry_secs;
                now - a.updated_at > Duration::seconds(expiry as i64)
            })
            .map(|a| a.id.clone())
            .collect();
        for assignment_id in idle {
            self.emit(EventBody::AssignmentExpired { assignment_id })?;
        }
        Ok(())
    }

    /// The rater's next task: tutorial and admission for new raters, then
    /// their pending assignment, then a fresh one. `None` when nothing is
    /// left to rate.
    pub fn next_task(&mut self, rater: &RaterId, study: Option<&StudyId>) -> Result<Option<Task>, ServiceError> {
        if let Some(id) = study {
            if self.study(id)?.closed {
                return Err(ServiceError::StudyClosed(id.clone()));
            }
        }
        if !self.is_admitted(rater) {
            let progress = self.state.raters.get(rater);
            let passed = progress.map(|r| &r.tutorial_passed);
            if let Some((pos, item)) =
                self.tutorial.iter().enumerate().find(|(_, i)| !passed.is_some_and(|p| p.contains(&i.id)))
            {
                return Ok(Some(Task::Tutorial(TutorialView::new(item, pos, self.tutorial.len()))));
            }
            if progress.and_then(|r| r.admission.as_ref()).is_some() {
                return Err(ServiceError::NotAdmitted(rater.clone()));
            }
            return Ok(Some(Task::Admission { items: self.rubric.items.iter().map(AdmissionItemView::from).collect() }));
        }
        self.expire_idle()?;

        if let Some(pending) = self.state.assignments.values().find(|a| {
            &a.rater_id == rater
                && a.state == AssignmentState::Issued
                && study.is_none_or(|s| &a.study_id == s)
                && !self.state.studies[&a.study_id].closed
        }) {
            return Ok(Some(self.task_for(pending)));
        }

        let candidates: Vec<&StudyId> = match study {
            Some(id) => vec![id],
            None => self.state.study_order.iter().filter(|id| !self.state.studies[*id].closed).collect(),
        };
        if candidates.is_empty() && !self.state.studies.is_empty() {
            let closed = self.state.study_order.last().cloned().unwrap_or_default();
            return Err(ServiceError::StudyClosed(closed));
        }
        let exposed = self.state.exposures.get(rater);
        let mut pick = None;
        'studies: for study_id in candidates {
            let s = &self.state.studies[study_id];
            for bundle in &s.bundles {
                if !servable(bundle, s.config.flow) || exposed.is_some_and(|e| e.contains(&bundle.answer_id)) {
                    continue;
                }
                if self.state.active_count(study_id, &bundle.answer_id) < s.config.raters_per_answer {
                    pick = Some((study_id.clone(), bundle.answer_id.clone(), s.config.flow));
                    break 'studies;
                }
            }
        }
        let Some((study_id, answer_id, kind)) = pick else {
            return Ok(None);
        };
        let assignment_id = format!("{study_id}-{:06}", self.state.studies[&study_id].assignment_ids.len() + 1);
        self.emit(EventBody::AssignmentIssued {
            assignment_id: assignment_id.clone(),
            study_id,
            answer_id,
            rater_id: rater.clone(),
            kind,
        })?;
        Ok(Some(self.task_for(&self.state.assignments[&assignment_id])))
    }

    fn task_for(&self, a: &Assignment) -> Task {
        let study = &self.state.studies[&a.study_id];
        let bundle = study.bundle(&a.answer_id).expect("assignment refers to a study bundle");
        match a.kind {
            TaskFlow::Rating => Task::Rating(RatingTask::new(a, &study.config, bundle)),
            TaskFlow::Ais => Task::Ais(AisTask::new(a, bundle)),
        }
    }

    /// Looks up an open assignment owned by `rater`.
    fn owned(&self, rater: &RaterId, id: &AssignmentId) -> Result<&Assignment, ServiceError> {
        if !self.is_admitted(rater) {
            return Err(ServiceError::NotAdmitted(rater.clone()));
        }
        let a = self.state.assignments.get(id).ok_or_else(|| ServiceError::UnknownAssignment(id.clone()))?;
        if &a.rater_id != rater {
            return Err(ServiceError::WrongRater(id.clone()));
        }
        if self.state.studies[&a.study_id].closed {
            return Err(ServiceError::StudyClosed(a.study_id.clone()));
        }
        Ok(a)
    }

    fn assistance_shown(&self, a: &Assignment, dimension: Dimension) -> bool {
        let study = &self.state.studies[&a.study_id];
        study.config.assistance_mode == AssistanceMode::Shown
            && study.bundle(&a.answer_id).is_some_and(|b| b.assistance_for(dimension).is_some())
    }

    pub fn submit_screening(
        &mut self,
        rater: &RaterId,
        assignment_id: &AssignmentId,
        result: ScreeningResult,
    ) -> Result<NextStep, ServiceError> {
        let a = self.owned(rater, assignment_id)?;
        if a.kind != TaskFlow::Rating {
            return Err(ServiceError::WrongTaskKind(assignment_id.clone()));
        }
        if a.state != AssignmentState::Issued || a.screening.is_some() {
            return Err(ServiceError::StaleAssignment(assignment_id.clone()));
        }
        let expected = self.state.studies[&a.study_id].config.screening_questions.len();
        if result.answers.len() != expected {
            return Err(ServiceError::InvalidScreening { expected, got: result.answers.len() });
        }
        let result = ScreeningResult::from_answers(result.answers, result.elapsed_ms);
        self.emit(EventBody::ScreeningSubmitted { assignment_id: assignment_id.clone(), result })?;
        Ok(self.state.assignments[assignment_id].next_step())
    }

    pub fn submit_rating(
        &mut self,
        rater: &RaterId,
        assignment_id: &AssignmentId,
        mut rating: DimensionRating,
    ) -> Result<RatingAck, ServiceError> {
        let a = self.owned(rater, assignment_id)?;
        if a.kind != TaskFlow::Rating {
            return Err(ServiceError::WrongTaskKind(assignment_id.clone()));
        }
        if a.state != AssignmentState::Issued {
            return Err(ServiceError::StaleAssignment(assignment_id.clone()));
        }
        match a.next_step() {
            NextStep::Screening => {
                return Err(ServiceError::OutOfOrder { expected: "screening".into(), got: rating.dimension.to_string() })
            }
            NextStep::Rate { dimension } if dimension != rating.dimension => {
                if a.ratings.iter().any(|r| r.dimension == rating.dimension) {
                    return Err(ServiceError::DuplicateDimension(rating.dimension));
                }
                return Err(ServiceError::OutOfOrder { expected: dimension.to_string(), got: rating.dimension.to_string() });
            }
            NextStep::Rate { .. } => {}
            NextStep::Complete | NextStep::ScreenedOut | NextStep::LabelKeypoints => {
                return Err(ServiceError::StaleAssignment(assignment_id.clone()))
            }
        }
        rating.assistance_shown = self.assistance_shown(a, rating.dimension);
        if rating.assistance_helpfulness.is_some() && a.feedback.contains_key(&rating.dimension) {
            return Err(ServiceError::DuplicateDimension(rating.dimension));
        }
        validate_rating(&rating)?;
        self.emit(EventBody::DimensionRated { assignment_id: assignment_id.clone(), rating })?;
        Ok(RatingAck { assignment_id: assignment_id.clone(), next: self.state.assignments[assignment_id].next_step() })
    }

    /// Helpfulness of the assistance shown for one dimension, on the 1..5
    /// scale only.
    pub fn submit_assistance_feedback(
        &mut self,
        rater: &RaterId,
        assignment_id: &AssignmentId,
        dimension: Dimension,
        helpfulness: LikertValue,
    ) -> Result<(), ServiceError> {
        let a = self.owned(rater, assignment_id)?;
        if a.kind != TaskFlow::Rating {
            return Err(ServiceError::WrongTaskKind(assignment_id.clone()));
        }
        if !matches!(a.state, AssignmentState::Issued | AssignmentState::Completed) || a.screening.is_none() {
            return Err(ServiceError::StaleAssignment(assignment_id.clone()));
        }
        if !self.assistance_shown(a, dimension) {
            return Err(ServiceError::AssistanceNotShown(dimension));
        }
        if helpfulness == LikertValue::DontKnow {
            return Err(RatingViolation::HelpfulnessOutOfScale.into());
        }
        let rated_inline = a.ratings.iter().any(|r| r.dimension == dimension && r.assistance_helpfulness.is_some());
        if a.feedback.contains_key(&dimension) || rated_inline {
            return Err(ServiceError::DuplicateDimension(dimension));
        }
        self.emit(EventBody::AssistanceFeedback { assignment_id: assignment_id.clone(), dimension, helpfulness })
    }

    pub fn submit_ais(
        &mut self,
        rater: &RaterId,
        assignment_id: &AssignmentId,
        submission: AisSubmission,
    ) -> Result<(), ServiceError> {
        let a = self.owned(rater, assignment_id)?;
        if a.kind != TaskFlow::Ais {
            return Err(ServiceError::WrongTaskKind(assignment_id.clone()));
        }
        if a.state != AssignmentState::Issued {
            return Err(ServiceError::StaleAssignment(assignment_id.clone()));
        }
        let keypoints = self.state.studies[&a.study_id].bundle(&a.answer_id).map_or(0, |b| b.keypoints.len());
        let mut labeled = BTreeSet::new();
        for l in &submission.labels {
            if l.index == 0 || l.index > keypoints {
                return Err(ServiceError::UnknownKeypoint(l.index));
            }
            if !labeled.insert(l.index) {
                return Err(ServiceError::DuplicateKeypointLabel(l.index));
            }
        }
        if let Some(missing) = (1..=keypoints).find(|i| !labeled.contains(i)) {
            return Err(ServiceError::MissingKeypointLabel(missing));
        }
        let mut submission = submission;
        submission.labels.sort_by_key(|l| l.index);
        self.emit(EventBody::AisSubmitted { assignment_id: assignment_id.clone(), submission })
    }

    pub fn tutorial_step(
        &mut self,
        rater: &RaterId,
        item_id: &str,
        response: &DimensionRating,
    ) -> Result<TutorialOutcome, ServiceError> {
        let item = self
            .tutorial
            .iter()
            .find(|i| i.id == item_id)
            .ok_or_else(|| ServiceError::UnknownItem(item_id.to_string()))?;
        let outcome = tutorial_step(item, response);
        self.emit(EventBody::TutorialAnswered {
            rater_id: rater.clone(),
            item_id: item_id.to_string(),
            advanced: outcome.advanced(),
        })?;
        Ok(outcome)
    }

    /// Scores an admission attempt. Only one attempt is accepted per rater.
    pub fn submit_admission(
        &mut self,
        rater: &RaterId,
        responses: &[AdmissionItemResponse],
    ) -> Result<AdmissionAttempt, ServiceError> {
        if let Some(previous) = self.state.raters.get(rater).and_then(|r| r.admission.as_ref()) {
            return if previous.passed { Ok(previous.clone()) } else { Err(ServiceError::NotAdmitted(rater.clone())) };
        }
        for r in responses.iter().flat_map(|r| &r.ratings) {
            validate_rating(r)?;
        }
        let attempt = score_admission(rater, responses, &self.rubric)?;
        self.emit(EventBody::AdmissionScored { attempt: attempt.clone() })?;
        Ok(attempt)
    }

    pub fn study_status(&self, study_id: &StudyId) -> Result<StudyStatus, ServiceError> {
        let s = self.study(study_id)?;
        let mut per_answer = Vec::new();
        for b in s.bundles.iter().filter(|b| servable(b, s.config.flow)) {
            let mut p =
                AnswerProgress { answer_id: b.answer_id.clone(), completed: 0, issued: 0, screened_out: 0, expired: 0 };
            for a in s.assignment_ids.iter().map(|id| &self.state.assignments[id]) {
                if a.answer_id != b.answer_id {
                    continue;
                }
                match a.state {
                    AssignmentState::Issued => p.issued += 1,
                    AssignmentState::Completed => p.completed += 1,
                    AssignmentState::ScreenedOut => p.screened_out += 1,
                    AssignmentState::Expired => p.expired += 1,
                }
            }
            per_answer.push(p);
        }
        let sum = |f: fn(&AnswerProgress) -> usize| per_answer.iter().map(f).sum::<usize>();
        let answers_complete = per_answer.iter().filter(|p| p.completed >= s.config.raters_per_answer).count();
        Ok(StudyStatus {
            study_id: study_id.clone(),
            name: s.config.name.clone(),
            assistance_mode: s.config.assistance_mode,
            flow: s.config.flow,
            raters_per_answer: s.config.raters_per_answer,
            closed: s.closed,
            answers: per_answer.len(),
            answers_complete,
            completed: sum(|p| p.completed),
            issued: sum(|p| p.issued),
            screened_out: sum(|p| p.screened_out),
            expired: sum(|p| p.expired),
            complete: answers_complete == per_answer.len(),
            per_answer,
        })
    }

    pub fn records(&self, study_id: &StudyId) -> Result<Vec<RatingRecord>, ServiceError> {
        self.study(study_id)?;
        Ok(self.state.records(study_id))
    }

    pub fn ais_records(&self, study_id: &StudyId) -> Result<Vec<AisRecord>, ServiceError> {
        self.study(study_id)?;
        Ok(self.state.ais_records(study_id))
    }
}
