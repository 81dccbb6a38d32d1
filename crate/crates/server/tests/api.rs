use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use oversight_core::domain::{catalog, Dimension, Question, SystemId};
use oversight_core::pipeline::{AnswerBundle, Critique};
use oversight_core::service::{AssistanceMode, RatingService, StudyConfig, SystemClock, TaskFlow};
use oversight_server::{router, AppState, Tokens};
use serde_json::{json, Value};
use std::sync::Arc;
use tower::ServiceExt;

fn bundles(n: usize) -> Vec<AnswerBundle> {
    (0..n)
        .map(|i| {
            let q = Question::new(format!("q{i}"), format!("Why does question {i} matter?"));
            let mut b = AnswerBundle::from_answer(&q, &SystemId("sys".into()), format!("Because {i}."))
                .with_keypoint("Claim one.", &["para a", "para b"])
                .with_keypoint("Claim two.", &["para c"]);
            for d in Dimension::ALL {
                let c = if d == Dimension::Clarity { Critique::NoCritique } else { Critique::Text(format!("On {d}.")) };
                b = b.with_assistance(d, c);
            }
            b
        })
        .collect()
}

fn tokens() -> Tokens {
    ["r1", "r2", "r3", "r4", "fresh"].iter().map(|r| (format!("tok-{r}"), (*r).into())).collect()
}

fn app(mode: AssistanceMode, flow: TaskFlow) -> Arc<AppState> {
    let mut s = RatingService::new(SystemClock);
    let mut config = StudyConfig::new("s1", mode);
    config.flow = flow;
    s.create_study(config, bundles(2)).unwrap();
    for r in ["r1", "r2", "r3", "r4"] {
        s.admit_rater(&r.into()).unwrap();
    }
    AppState::new(s, tokens())
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

async fn next(state: &Arc<AppState>, rater: &str) -> Value {
    let (status, body) = call(state, "GET", &format!("/api/v1/tasks/next?rater={rater}"), Some(&format!("tok-{rater}")), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body["task"].clone()
}

fn rating(dim: &str, score: Value) -> Value {
    json!({"dimension": dim, "score": score, "issues": [], "elapsed_ms": 1200})
}

#[tokio::test]
async fn taxonomy_payload_matches_domain_strings() {
    let state = app(AssistanceMode::Shown, TaskFlow::Rating);
    let (status, body) = call(&state, "GET", "/api/v1/taxonomy", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, serde_json::to_value(catalog()).unwrap());
    let dims = body["dimensions"].as_array().unwrap();
    assert_eq!(dims.len(), 8);
    for (entry, d) in dims.iter().zip(Dimension::ALL) {
        assert_eq!(entry["statement"].as_str().unwrap(), d.statement());
    }
    assert_eq!(body["issues"].as_array().unwrap().len(), 38);
}

#[tokio::test]
async fn authentication_is_required() {
    let state = app(AssistanceMode::Shown, TaskFlow::Rating);
    let (status, body) = call(&state, "GET", "/api/v1/tasks/next?rater=r1", None, None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["error"], "unauthorized");
    let (status, _) = call(&state, "GET", "/api/v1/tasks/next?rater=r1", Some("bogus"), None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, body) = call(&state, "GET", "/api/v1/tasks/next?rater=r2", Some("tok-r1"), None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(body["error"], "wrong_rater");
    let (status, _) = call(&state, "GET", "/api/v1/studies/s1/status", None, None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn full_rating_flow_over_http() {
    let state = app(AssistanceMode::Shown, TaskFlow::Rating);
    let task = next(&state, "r1").await;
    assert_eq!(task["kind"], "rating");
    assert_eq!(task["next"]["step"], "screening");
    let clarity = &task["dimensions"][1];
    assert_eq!(clarity["statement"], Dimension::Clarity.statement());
    assert_eq!(clarity["assistance"]["no_critique"], true);
    let id = task["assignment_id"].as_str().unwrap().to_string();
    let auth = Some("tok-r1");

    let (status, body) =
        call(&state, "POST", "/api/v1/ratings", auth, Some(json!({"assignment_id": id, "rating": rating("style", json!(4))}))).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::CONFLICT, Some("out_of_order")));

    let (status, body) =
        call(&state, "POST", "/api/v1/screening", auth, Some(json!({"assignment_id": id, "answers": [true, true, true], "elapsed_ms": 900}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["next"], json!({"step": "rate", "dimension": "style"}));

    let low = json!({"assignment_id": id, "rating": {"dimension": "style", "score": 2, "issues": []}});
    let (status, body) = call(&state, "POST", "/api/v1/ratings", auth, Some(low)).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("issue_required")));

    let fb = json!({"assignment_id": id, "dimension": "style", "helpfulness": "dont_know"});
    let (status, body) = call(&state, "POST", "/api/v1/assistance-feedback", auth, Some(fb)).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("helpfulness_out_of_scale")));
    let fb = json!({"assignment_id": id, "dimension": "style", "helpfulness": 2});
    let (status, body) = call(&state, "POST", "/api/v1/assistance-feedback", auth, Some(fb)).await;
    assert_eq!(status, StatusCode::OK, "{body}");

    let mut last = Value::Null;
    for d in Dimension::ALL {
        let score = if d.is_epistemological() { json!("dont_know") } else { json!(5) };
        let (status, body) =
            call(&state, "POST", "/api/v1/ratings", auth, Some(json!({"assignment_id": id, "rating": rating(d.id(), score)}))).await;
        assert_eq!(status, StatusCode::OK, "{d}: {body}");
        last = body;
    }
    assert_eq!(last["next"]["step"], "complete");
    let (status, body) =
        call(&state, "POST", "/api/v1/ratings", auth, Some(json!({"assignment_id": id, "rating": rating("style", json!(4))}))).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::CONFLICT, Some("stale_assignment")));

    let (status, body) =
        call(&state, "POST", "/api/v1/screening", Some("tok-r2"), Some(json!({"assignment_id": id, "answers": [true, true, true]}))).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::FORBIDDEN, Some("wrong_rater")));

    let (status, body) = call(&state, "GET", "/api/v1/studies/s1/status", auth, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["completed"], 1);
    assert_eq!(body["answers"], 2);
    let (status, body) = call(&state, "GET", "/api/v1/studies/nope/status", auth, None).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_study")));

    let records = state.service().records(&"s1".into()).unwrap();
    assert_eq!(records.len(), 1);
    let style = records[0].rating(Dimension::Style).unwrap();
    assert!(style.assistance_shown);
    assert_eq!(style.assistance_helpfulness.map(|h| h.to_string()), Some("2".into()));
}

#[tokio::test]
async fn screening_no_ends_the_flow() {
    let state = app(AssistanceMode::Shown, TaskFlow::Rating);
    let task = next(&state, "r1").await;
    let id = task["assignment_id"].as_str().unwrap();
    let (status, body) =
        call(&state, "POST", "/api/v1/screening", Some("tok-r1"), Some(json!({"assignment_id": id, "answers": [true, false, true]}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["next"]["step"], "screened_out");
    let after = next(&state, "r1").await;
    assert_ne!(after["answer_id"], task["answer_id"]);
}

#[tokio::test]
async fn hidden_mode_task_has_no_assistance_and_rejects_feedback() {
    let state = app(AssistanceMode::Hidden, TaskFlow::Rating);
    let task = next(&state, "r1").await;
    assert!(!task.to_string().contains("assistance"));
    let id = task["assignment_id"].as_str().unwrap();
    call(&state, "POST", "/api/v1/screening", Some("tok-r1"), Some(json!({"assignment_id": id, "answers": [true, true, true]}))).await;
    let fb = json!({"assignment_id": id, "dimension": "tone", "helpfulness": 3});
    let (status, body) = call(&state, "POST", "/api/v1/assistance-feedback", Some("tok-r1"), Some(fb)).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("assistance_not_shown")));
}

#[tokio::test]
async fn ais_flow_requires_every_keypoint() {
    let state = app(AssistanceMode::Hidden, TaskFlow::Ais);
    let task = next(&state, "r1").await;
    assert_eq!(task["kind"], "ais");
    assert_eq!(task["keypoints"].as_array().unwrap().len(), 2);
    assert_eq!(task["keypoints"][0]["passages"], json!(["para a", "para b"]));
    let id = task["assignment_id"].as_str().unwrap();
    let partial = json!({"assignment_id": id, "labels": [{"index": 1, "label": "fully"}]});
    let (status, body) = call(&state, "POST", "/api/v1/ais", Some("tok-r1"), Some(partial)).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("missing_keypoint_label")));
    let full = json!({"assignment_id": id, "labels": [
        {"index": 1, "label": "contradicts", "joint_support": "only with paragraph b"},
        {"index": 2, "label": "not_supported"}
    ]});
    let (status, body) = call(&state, "POST", "/api/v1/ais", Some("tok-r1"), Some(full)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(state.service().ais_records(&"s1".into()).unwrap().len(), 1);
}

#[tokio::test]
async fn tutorial_and_admission_gate_new_raters() {
    let state = app(AssistanceMode::Shown, TaskFlow::Rating);
    let items: Vec<_> = state.service().tutorial().to_vec();
    for item in &items {
        let task = next(&state, "fresh").await;
        assert_eq!(task["kind"], "tutorial");
        assert_eq!(task["item_id"], item.id.as_str());
        let wrong = json!({"item_id": item.id, "rating": {"dimension": item.dimension, "score": 4}});
        let (_, body) = call(&state, "POST", "/api/v1/tutorial", Some("tok-fresh"), Some(wrong)).await;
        assert_eq!(body, json!({"outcome": "retry_with_hint", "hint": item.hint}));
        let right =
            json!({"item_id": item.id, "rating": {"dimension": item.dimension, "score": 1, "issues": [item.main_issue]}});
        let (_, body) = call(&state, "POST", "/api/v1/tutorial", Some("tok-fresh"), Some(right)).await;
        assert_eq!(body["outcome"], "advance");
    }
    let task = next(&state, "fresh").await;
    assert_eq!(task["kind"], "admission");
    let rubric = state.service().rubric().clone();
    let responses: Vec<Value> = rubric
        .items
        .iter()
        .map(|i| {
            let ratings: Vec<Value> = i
                .expected
                .iter()
                .map(|e| json!({"dimension": e.dimension, "score": 2, "issues": [e.issue]}))
                .collect();
            json!({"item_id": i.id, "ratings": ratings})
        })
        .collect();
    let (status, body) = call(&state, "POST", "/api/v1/admission", Some("tok-fresh"), Some(json!({"responses": responses}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["score"], 6);
    assert_eq!(body["passed"], true);
    assert_eq!(next(&state, "fresh").await["kind"], "rating");
}

#[tokio::test]
async fn malformed_bodies_are_rejected() {
    let state = app(AssistanceMode::Shown, TaskFlow::Rating);
    let (status, _) =
        call(&state, "POST", "/api/v1/screening", Some("tok-r1"), Some(json!({"assignment_id": "x", "answers": [], "extra": 1}))).await;
    assert!(status.is_client_error());
    let (status, _) =
        call(&state, "POST", "/api/v1/ratings", Some("tok-r1"), Some(json!({"assignment_id": "x", "rating": rating("style", json!(7))}))).await;
    assert!(status.is_client_error());
    let (status, body) =
        call(&state, "POST", "/api/v1/screening", Some("tok-r1"), Some(json!({"assignment_id": "x", "answers": [true]}))).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_assignment")));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_requests_never_exceed_quota() {
    let state = app(AssistanceMode::Shown, TaskFlow::Rating);
    let handles: Vec<_> = ["r1", "r2", "r3", "r4"]
        .into_iter()
        .map(|r| {
            let state = state.clone();
            tokio::spawn(async move { next(&state, r).await["answer_id"].as_str().unwrap().to_string() })
        })
        .collect();
    let mut answers = Vec::new();
    for h in handles {
        answers.push(h.await.unwrap());
    }
    answers.sort();
    assert_eq!(answers, vec!["q0__sys", "q0__sys", "q0__sys", "q1__sys"]);
    let events = state.service().events().to_vec();
    assert!(events.windows(2).all(|w| w[1].seq == w[0].seq + 1));
}
