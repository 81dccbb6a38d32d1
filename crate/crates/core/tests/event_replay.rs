use chrono::{DateTime, Duration};
use oversight_core::analysis::{build_report_from_events, ReportOptions};
use oversight_core::domain::{Dimension, DimensionRating, KeypointSupport, LikertValue, Question, RaterId, ScreeningResult, SystemId};
use oversight_core::pipeline::{AnswerBundle, Critique};
use oversight_core::service::{
    read_events, simulate_study, write_events, AisSubmission, AssistanceMode, KeypointLabel, ManualClock, NextStep,
    RatingService, ServiceState, SimulationSpec, StudyConfig, Task, TaskFlow,
};
use proptest::prelude::*;
use std::sync::Arc;

#[derive(Debug, Clone)]
enum Op {
    Next(usize),
    Screen(usize, bool),
    Rate(usize, u8, bool),
    Feedback(usize, u8),
    Ais(usize, u8),
    Wait(i64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0..4usize).prop_map(Op::Next),
        2 => (0..4usize, prop::bool::weighted(0.85)).prop_map(|(r, ok)| Op::Screen(r, ok)),
        6 => (0..4usize, 1u8..=6, prop::bool::weighted(0.9)).prop_map(|(r, s, i)| Op::Rate(r, s, i)),
        1 => (0..4usize, 0u8..=5).prop_map(|(r, h)| Op::Feedback(r, h)),
        1 => (0..4usize, 0u8..4).prop_map(|(r, l)| Op::Ais(r, l)),
        1 => (0i64..5000).prop_map(Op::Wait),
    ]
}

fn bundles() -> Vec<AnswerBundle> {
    let mut out = Vec::new();
    for q in 0..3 {
        let question = Question::new(format!("q{q}"), format!("Question {q}?"));
        for sys in ["a", "b"] {
            let mut b = AnswerBundle::from_answer(&question, &SystemId(sys.into()), format!("Answer {q}{sys}."))
                .with_keypoint("A claim.", &["evidence"]);
            for d in Dimension::ALL {
                b = b.with_assistance(d, if d.position() % 3 == 0 { Critique::NoCritique } else { Critique::Text("c".into()) });
            }
            out.push(b);
        }
    }
    out
}

/// Drives a service with arbitrary operations; invalid ones are rejected and
/// leave no trace in the log.
fn drive(ops: &[Op]) -> RatingService {
    let clock = Arc::new(ManualClock::at(DateTime::from_timestamp(1_700_000_000, 0).unwrap()));
    let mut s = RatingService::new(clock.clone());
    let mut config = StudyConfig::new("main", AssistanceMode::Shown);
    config.expiry_secs = 3;
    s.create_study(config, bundles()).unwrap();
    let mut ais = StudyConfig::new("attr", AssistanceMode::Hidden);
    ais.flow = TaskFlow::Ais;
    ais.raters_per_answer = 1;
    s.create_study(ais, bundles()).unwrap();
    let raters: Vec<RaterId> = (0..4).map(|i| RaterId(format!("r{i}"))).collect();
    for r in &raters {
        s.admit_rater(r).unwrap();
    }
    let mut current: Vec<Option<String>> = vec![None; 4];
    for op in ops {
        match *op {
            Op::Next(r) => {
                let study = if r == 3 { "attr" } else { "main" };
                if let Ok(Some(Task::Rating(t))) = s.next_task(&raters[r], Some(&study.into())) {
                    current[r] = Some(t.assignment_id);
                } else if let Ok(Some(Task::Ais(t))) = s.next_task(&raters[r], Some(&study.into())) {
                    current[r] = Some(t.assignment_id);
                }
            }
            Op::Screen(r, ok) => {
                if let Some(id) = &current[r] {
                    let _ = s.submit_screening(&raters[r], id, ScreeningResult::from_answers(vec![true, ok, true], 500));
                }
            }
            Op::Rate(r, score, with_issue) => {
                let Some(id) = current[r].clone() else { continue };
                let Some(a) = s.state().assignments.get(&id) else { continue };
                let NextStep::Rate { dimension } = a.next_step() else { continue };
                let value = if score == 6 { LikertValue::DontKnow } else { LikertValue::score(score).unwrap() };
                let mut rating = DimensionRating::new(dimension, value);
                if with_issue && value.is_low() {
                    rating.issues.insert(dimension.issues().next().unwrap().id.to_string());
                }
                rating.elapsed_ms = u64::from(score) * 1700;
                let _ = s.submit_rating(&raters[r], &id, rating);
            }
            Op::Feedback(r, h) => {
                let Some(id) = current[r].clone() else { continue };
                let value = if h == 0 { LikertValue::DontKnow } else { LikertValue::score(h).unwrap() };
                let _ = s.submit_assistance_feedback(&raters[r], &id, Dimension::ALL[usize::from(h) % 8], value);
            }
            Op::Ais(r, l) => {
                let Some(id) = current[r].clone() else { continue };
                let labels = vec![KeypointLabel { index: 1, label: KeypointSupport::ALL[usize::from(l)], joint_support: None }];
                let _ = s.submit_ais(&raters[r], &id, AisSubmission { labels });
            }
            Op::Wait(ms) => clock.advance(Duration::milliseconds(ms)),
        }
    }
    s
}

fn report_bytes(events: &[oversight_core::service::Event]) -> String {
    let options = ReportOptions { resamples: 200, ..Default::default() };
    match build_report_from_events(events, &[], &options) {
        Ok(r) => r.to_json(),
        Err(e) => format!("error: {}", e.code()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_reconstructs_state_and_report(ops in prop::collection::vec(op(), 0..160)) {
        let live = drive(&ops);
        let events = live.events().to_vec();
        let replayed = ServiceState::replay(&events).unwrap();
        prop_assert_eq!(&replayed, live.state());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        write_events(&path, &events).unwrap();
        let reread = read_events(&path).unwrap();
        prop_assert_eq!(&reread, &events);
        let reopened = RatingService::open(&path, oversight_core::service::SystemClock).unwrap();
        prop_assert_eq!(reopened.state(), live.state());
        prop_assert_eq!(report_bytes(&reread), report_bytes(&events));
    }

    #[test]
    fn quota_never_exceeded(ops in prop::collection::vec(op(), 0..160)) {
        let live = drive(&ops);
        for study in ["main", "attr"] {
            let status = live.study_status(&study.into()).unwrap();
            for p in status.per_answer {
                prop_assert!(p.completed + p.issued <= status.raters_per_answer, "{:?}", p);
            }
        }
    }
}

#[test]
fn simulated_log_round_trips_byte_identically() {
    let spec = SimulationSpec::default();
    let live = simulate_study(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    write_events(&path, live.events()).unwrap();
    let first = std::fs::read(&path).unwrap();
    let reopened = RatingService::open(&path, oversight_core::service::SystemClock).unwrap();
    assert_eq!(reopened.state(), live.state());
    let copy = dir.path().join("copy.jsonl");
    write_events(&copy, reopened.events()).unwrap();
    assert_eq!(std::fs::read(&copy).unwrap(), first);
    assert_eq!(report_bytes(reopened.events()), report_bytes(live.events()));
    assert!(!report_bytes(live.events()).starts_with("error"));
}
