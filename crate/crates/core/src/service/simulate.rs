//! Seeded synthetic studies: simulated raters driving a real service, used
//! for golden reports and demos.

use super::{
    AisSubmission, AssistanceMode, KeypointLabel, ManualClock, NextStep, RatingService, ServiceError, StudyConfig,
    Task, TaskFlow,
};
use crate::domain::{Dimension, DimensionRating, KeypointSupport, LikertValue, Question, RaterId, ScreeningResult, SystemId};
use crate::pipeline::{AnswerBundle, Critique};
use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatedSystem {
    pub id: SystemId,
    /// Mean score the simulated raters give this system, 1..5.
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    pub study_id: String,
    pub systems: Vec<SimulatedSystem>,
    pub questions: usize,
    pub raters: usize,
    pub raters_per_answer: usize,
    pub assistance_mode: AssistanceMode,
    /// Also run an attribution study over the same answers with separate raters.
    pub ais: bool,
    pub seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            study_id: "synthetic".into(),
            systems: vec![
                SimulatedSystem { id: "system-a".into(), quality: 4.2 },
                SimulatedSystem { id: "system-b".into(), quality: 3.1 },
            ],
            questions: 6,
            raters: 4,
            raters_per_answer: 3,
            assistance_mode: AssistanceMode::Shown,
            ais: true,
            seed: 7,
        }
    }
}

fn bundles(spec: &SimulationSpec) -> Vec<AnswerBundle> {
    let mut out = Vec::new();
    for q in 0..spec.questions {
        let question = Question::new(format!("q{q:03}"), format!("Synthetic climate question {q}?"));
        for system in &spec.systems {
            let mut b = AnswerBundle::from_answer(
                &question,
                &system.id,
                format!("Synthetic answer to question {q} from {}.", system.id),
            );
            for k in 1..=1 + q % 3 {
                b = b.with_keypoint(
                    format!("Keypoint {k} of question {q}."),
                    &[&format!("Evidence paragraph {k}a."), &format!("Evidence paragraph {k}b.")],
                );
            }
            for d in Dimension::ALL {
                let critique = if (q + d.position()) % 4 == 0 {
                    Critique::NoCritique
                } else {
                    Critique::Text(format!("Synthetic critique of {} for question {q}.", d.id()))
                };
                b = b.with_assistance(d, critique);
            }
            out.push(b);
        }
    }
    out
}

fn likert(v: f64) -> u8 {
    v.round().clamp(1.0, 5.0) as u8
}

fn simulated_rating(rng: &mut ChaCha8Rng, dimension: Dimension, quality: f64, shown: bool) -> DimensionRating {
    let score = if dimension.is_epistemological() && rng.random_bool(0.05) {
        LikertValue::DontKnow
    } else {
        LikertValue::score(likert(quality + rng.random_range(-1.5..1.5))).expect("clamped")
    };
    let mut r = DimensionRating::new(dimension, score);
    if score.is_low() {
        let issues: Vec<&str> = dimension.issues().map(|t| t.id).filter(|id| *id != "other").collect();
        r.issues.insert(issues[rng.random_range(0..issues.len())].to_string());
    }
    let base = if dimension.is_epistemological() { 14_000.0 } else { 6_000.0 };
    r.elapsed_ms = (base * rng.random_range(0.5..2.0)) as u64;
    if rng.random_bool(0.01) {
        r.elapsed_ms += 90_000;
    }
    if shown {
        r.assistance_helpfulness = Some(LikertValue::score(rng.random_range(2..=5)).expect("in range"));
    }
    r
}

/// Runs the simulation to completion and returns the service holding the
/// full event log. Deterministic for a given spec.
pub fn simulate_study(spec: &SimulationSpec) -> Result<RatingService, ServiceError> {
    let clock = Arc::new(ManualClock::at(
        chrono::DateTime::from_timestamp(1_700_000_000, 0).expect("valid timestamp"),
    ));
    let mut service = RatingService::new(clock.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bundles = bundles(spec);
    let quality = |system: &SystemId| spec.systems.iter().find(|s| &s.id == system).map_or(3.0, |s| s.quality);

    let mut config = StudyConfig::new(spec.study_id.as_str(), spec.assistance_mode);
    config.raters_per_answer = spec.raters_per_answer;
    service.create_study(config, bundles.clone())?;
    let raters: Vec<RaterId> = (0..spec.raters).map(|i| RaterId(format!("rater-{i:02}"))).collect();
    for r in &raters {
        service.admit_rater(r)?;
    }
    let mut active = raters.clone();
    while !active.is_empty() {
        let mut still = Vec::new();
        for rater in &active {
            clock.advance(Duration::seconds(5));
            let Some(Task::Rating(task)) = service.next_task(rater, None)? else { continue };
            still.push(rater.clone());
            let system = bundles.iter().find(|b| b.answer_id == task.answer_id).expect("served bundle").system_id.clone();
            let pass = rng.random_bool(0.95);
            let answers = (0..task.screening_questions.len()).map(|i| pass || i > 0).collect();
            let screening_ms = rng.random_range(8_000..30_000);
            clock.advance(Duration::milliseconds(screening_ms as i64));
            let mut next = service.submit_screening(rater, &task.assignment_id, ScreeningResult::from_answers(answers, screening_ms))?;
            while let NextStep::Rate { dimension } = next {
                let shown = task.dimensions[dimension.position()].assistance.is_some();
                let rating = simulated_rating(&mut rng, dimension, quality(&system), shown);
                clock.advance(Duration::milliseconds(rating.elapsed_ms as i64));
                next = service.submit_rating(rater, &task.assignment_id, rating)?.next;
            }
        }
        active = still;
    }

    if spec.ais {
        let mut config = StudyConfig::new(format!("{}-ais", spec.study_id), AssistanceMode::Hidden);
        config.raters_per_answer = 1;
        config.flow = TaskFlow::Ais;
        service.create_study(config, bundles.clone())?;
        let annotators: Vec<RaterId> = (0..2).map(|i| RaterId(format!("ais-rater-{i:02}"))).collect();
        for r in &annotators {
            service.admit_rater(r)?;
        }
        let mut active = annotators;
        while !active.is_empty() {
            let mut still = Vec::new();
            for rater in &active {
                clock.advance(Duration::seconds(30));
                let Some(Task::Ais(task)) = service.next_task(rater, None)? else { continue };
                still.push(rater.clone());
                let system = bundles.iter().find(|b| b.answer_id == task.answer_id).expect("served bundle").system_id.clone();
                let p_full = (quality(&system) - 1.0) / 4.0;
                let labels = task
                    .keypoints
                    .iter()
                    .map(|k| {
                        let x: f64 = rng.random();
                        let label = if x < p_full * 0.5 {
                            KeypointSupport::Fully
                        } else if x < p_full {
                            KeypointSupport::Partially
                        } else if x < 0.97 {
                            KeypointSupport::NotSupported
                        } else {
                            KeypointSupport::Contradicts
                        };
                        KeypointLabel { index: k.index, label, joint_support: None }
                    })
                    .collect();
                service.submit_ais(rater, &task.assignment_id, AisSubmission { labels })?;
            }
            active = still;
        }
    }
    Ok(service)
}
