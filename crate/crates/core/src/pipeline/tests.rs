use super::*;
use crate::evidence::{ArticleRef, StaticArticles};
use crate::llm::{RetryPolicy, ScriptedProvider};
use crate::domain::Question;
use chrono::{DateTime, Utc};
use std::sync::Arc;

const ANSWER: &str = "Global temperatures have risen by about 1.1 degrees. This is mainly caused by burning fossil fuels. Impacts include sea level rise.";

fn gateway(p: ScriptedProvider) -> (Gateway, Arc<ScriptedProvider>) {
    let p = Arc::new(p);
    let g = Gateway::new().with_provider("aux", p.clone(), 4).with_retry(RetryPolicy::immediate());
    (g, p)
}

fn aid() -> AnswerId {
    AnswerId::from("a1")
}

fn paragraphs(texts: &[&str]) -> Vec<Paragraph> {
    let article = ArticleRef {
        url: "https://en.wikipedia.org/wiki/X".into(),
        title: "X".into(),
        fetched_at: DateTime::<Utc>::UNIX_EPOCH,
        revision_note: None,
    };
    crate::evidence::article_paragraphs(&article, &texts.join("\n\n"), 0)
}

#[test]
fn basic_answer_prompt_is_instruction_plus_question() {
    let (g, p) = gateway(ScriptedProvider::new().reply("42."));
    let pl = Pipeline::new(&g, "aux");
    let a = pl.generate_answer("aux", "Is it warming?", AnswerVariant::Basic, 0.0).unwrap();
    assert_eq!(a.text, "42.");
    assert_eq!(a.prompt_id, "answer_basic");
    assert_eq!(
        p.prompts()[0],
        "You are an expert on climate change communication. Answer each question in a 3-4 sentence paragraph.\n\nQuestion: Is it warming?"
    );
}

#[test]
fn dimension_aware_prompt() {
    let (g, p) = gateway(ScriptedProvider::new().reply("ok"));
    Pipeline::new(&g, "aux").generate_answer("aux", "Q?", AnswerVariant::DimensionAware, 0.0).unwrap();
    assert!(p.prompts()[0].contains("appropriately reflect this"));
}

#[test]
fn empty_question_rejected() {
    let (g, _) = gateway(ScriptedProvider::new());
    let err = Pipeline::new(&g, "aux").generate_answer("aux", "  ", AnswerVariant::Basic, 0.0).unwrap_err();
    assert_eq!(err.code(), "empty_input");
}

#[test]
fn keypoint_sentinel_gives_empty_list() {
    let (g, _) = gateway(ScriptedProvider::new().reply("No Keypoints"));
    let out = Pipeline::new(&g, "aux").extract_keypoints(&aid(), "Q", ANSWER).unwrap();
    assert!(out.keypoints.is_empty());
}

#[test]
fn first_sentence_is_accepted_verbatim() {
    let (g, p) = gateway(
        ScriptedProvider::new().reply("\"Global temperatures have risen by about 1.1 degrees.\""),
    );
    let out = Pipeline::new(&g, "aux").extract_keypoints(&aid(), "Q", ANSWER).unwrap();
    assert_eq!(out.keypoints.len(), 1);
    assert_eq!(out.keypoints[0].index, 1);
    assert_eq!(out.keypoints[0].text, "Global temperatures have risen by about 1.1 degrees.");
    assert!(out.warnings.is_empty());
    assert_eq!(p.calls(), 1);
}

#[test]
fn only_first_three_lines_kept() {
    let reply = "1. Global temperatures have risen\n2. mainly caused by burning fossil fuels\n3. Impacts include sea level rise.\n4. This is mainly caused";
    let (g, _) = gateway(ScriptedProvider::new().reply(reply));
    let out = Pipeline::new(&g, "aux").extract_keypoints(&aid(), "Q", ANSWER).unwrap();
    let texts: Vec<_> = out.keypoints.iter().map(|k| k.text.as_str()).collect();
    assert_eq!(
        texts,
        ["Global temperatures have risen", "mainly caused by burning fossil fuels", "Impacts include sea level rise."]
    );
    assert_eq!(out.warnings[0].code, "too_many_keypoints");
}

#[test]
fn non_verbatim_line_triggers_one_retry() {
    let (g, p) = gateway(
        ScriptedProvider::new()
            .reply("Temperatures went up a lot.\nImpacts include sea level rise.")
            .reply("Impacts include sea level rise.\nOceans are boiling."),
    );
    let out = Pipeline::new(&g, "aux").extract_keypoints(&aid(), "Q", ANSWER).unwrap();
    assert_eq!(p.calls(), 2);
    assert_eq!(out.keypoints.len(), 1);
    assert_eq!(out.keypoints[0].text, "Impacts include sea level rise.");
    let rejected: Vec<_> = out.warnings.iter().filter(|w| w.code == "not_verbatim").collect();
    assert_eq!(rejected.len(), 2);
}

#[test]
fn all_lines_rejected_after_retry() {
    let (g, _) = gateway(ScriptedProvider::new().reply("Made up.").reply("Also made up."));
    let err = Pipeline::new(&g, "aux").extract_keypoints(&aid(), "Q", ANSWER).unwrap_err();
    assert_eq!(err, PipelineError::AllLinesRejected);
}

#[test]
fn url_proposals() {
    let (g, _) = gateway(
        ScriptedProvider::new()
            .reply("No URL")
            .reply("https://en.wikipedia.org/wiki/Climate_change")
            .reply("See https://en.wikipedia.org/wiki/Climate_change for details")
            .reply("https://example.com/wiki/Climate_change"),
    );
    let pl = Pipeline::new(&g, "aux");
    let outcomes: Vec<UrlProposal> = (0..4).map(|_| pl.propose_evidence_url("Q", "A").unwrap()).collect();
    assert_eq!(outcomes[0].url, None);
    assert_eq!(outcomes[0].outcome, UrlOutcome::NoUrl);
    assert_eq!(outcomes[1].url.as_deref(), Some("https://en.wikipedia.org/wiki/Climate_change"));
    assert_eq!(outcomes[2].outcome, UrlOutcome::Invalid);
    assert_eq!(outcomes[3].outcome, UrlOutcome::Invalid);
    let rate = url_validity_rate(&outcomes.iter().map(|o| o.outcome).collect::<Vec<_>>());
    assert_eq!(rate, Some(25.0));
    assert_eq!(url_validity_rate(&[]), None);
}

#[test]
fn ranking_ties_go_to_earlier_paragraph() {
    let (g, p) = gateway(ScriptedProvider::new().replies(["10", "90", "90", "5"]));
    let pars = paragraphs(&["p0", "p1", "p2", "p3"]);
    let set = Pipeline::new(&g, "aux").rank_passages(1, "K", &pars).unwrap();
    let got: Vec<(usize, u8)> = set.ranked.iter().map(|s| (s.paragraph.index, s.score)).collect();
    assert_eq!(got, [(1, 90), (2, 90), (0, 10)]);
    assert_eq!(p.calls(), 4);
    assert!(p.prompts()[2].contains("Passage: p2"));
}

#[test]
fn ranking_singleton_and_parse_failure() {
    let (g, _) = gateway(ScriptedProvider::new().reply("100"));
    let set = Pipeline::new(&g, "aux").rank_passages(1, "K", &paragraphs(&["only"])).unwrap();
    assert_eq!(set.ranked.len(), 1);
    assert_eq!(set.ranked[0].score, 100);

    let (g, _) = gateway(ScriptedProvider::new().reply("very relevant"));
    let set = Pipeline::new(&g, "aux").rank_passages(1, "K", &paragraphs(&["only"])).unwrap();
    assert_eq!(set.ranked[0].score, 0);
    assert_eq!(set.warnings[0].code, "non_numeric_score");
}

#[test]
fn no_critique_sentinel() {
    let (g, _) = gateway(ScriptedProvider::new().reply("No Critique"));
    let a = Pipeline::new(&g, "aux").generate_assistance(&aid(), Dimension::Tone, "Q", "A", &[]).unwrap();
    assert_eq!(a.critique, Critique::NoCritique);
    assert!(!a.grounded);
}

#[test]
fn style_prompt_contains_expanded_statement() {
    let (g, p) = gateway(ScriptedProvider::new().reply("Too long."));
    let a = Pipeline::new(&g, "aux").generate_assistance(&aid(), Dimension::Style, "Q", "A", &["ignored"]).unwrap();
    assert_eq!(a.critique, Critique::Text("Too long.".into()));
    assert!(!a.grounded);
    let prompt = &p.prompts()[0];
    assert!(prompt.contains("not too long or too short"));
    assert!(!prompt.contains("ignored"));
}

#[test]
fn epistemological_prompt_quotes_each_paragraph_once() {
    let (g, p) = gateway(ScriptedProvider::new().reply("It misses X."));
    let ev = ["First paragraph text.", "Second paragraph text."];
    let a = Pipeline::new(&g, "aux").generate_assistance(&aid(), Dimension::Accuracy, "Q", "A", &ev).unwrap();
    assert!(a.grounded);
    let prompt = &p.prompts()[0];
    for e in ev {
        assert_eq!(prompt.matches(e).count(), 1);
    }
    assert!(prompt.contains("Statement: The answer is accurate. In particular"));
}

#[test]
fn ungrounded_epistemological_prompt_has_no_evidence_block() {
    let (g, p) = gateway(ScriptedProvider::new().reply("No Critique"));
    let a = Pipeline::new(&g, "aux").generate_assistance(&aid(), Dimension::Uncertainty, "Q", "A", &[]).unwrap();
    assert!(!a.grounded);
    assert!(!p.prompts()[0].contains("Paragraphs:"));
}

#[test]
fn auto_rate_three_samples_in_order() {
    let (g, p) = gateway(ScriptedProvider::new().rule(
        ["Statement: The answer is accurate."],
        &[
            "Rating: 3 Problem: vague Explanation: a",
            "Rating: 4 Problem: none Explanation: b",
            "Rating: 5 Problem: none Explanation: c",
        ],
    ));
    let r = Pipeline::new(&g, "aux").auto_rate(&aid(), Dimension::Accuracy, "Q", "A", None).unwrap();
    assert_eq!(r.samples.iter().map(|s| s.rating).collect::<Vec<_>>(), [3, 4, 5]);
    assert_eq!(r.mean(), 4.0);
    assert_eq!(r.raw_texts.len(), 3);
    assert!(!p.prompts()[0].contains("Critique:"));
}

#[test]
fn auto_rate_with_critique_uses_critique_prompt() {
    let (g, p) = gateway(ScriptedProvider::new().fallback("Rating: 4 Problem: none Explanation: fine"));
    let critique = Critique::Text("Too vague.".into());
    let r = Pipeline::new(&g, "aux").auto_rate(&aid(), Dimension::Specificity, "Q", "A", Some(&critique)).unwrap();
    assert_eq!(r.samples[0], RaterSample { rating: 4, problem: "none".into(), explanation: "fine".into() });
    assert!(p.prompts()[0].contains("Critique: Too vague."));
}

#[test]
fn auto_rate_out_of_scale_after_retry() {
    let (g, p) = gateway(ScriptedProvider::new().fallback("rating: 6 Problem: x Explanation: y"));
    let err = Pipeline::new(&g, "aux").auto_rate(&aid(), Dimension::Tone, "Q", "A", None).unwrap_err();
    assert_eq!(err.code(), "unparseable_sample");
    assert_eq!(p.calls(), 2);
}

#[test]
fn auto_rate_retry_recovers() {
    let (g, _) = gateway(ScriptedProvider::new().rule(
        ["likert"],
        &["garbage", "Rating: 2 Problem: p Explanation: e", "Rating: 2 Problem: p Explanation: e", "Rating: 1 Problem: p Explanation: e"],
    ));
    let r = Pipeline::new(&g, "aux").auto_rate(&aid(), Dimension::Tone, "Q", "A", None).unwrap();
    assert_eq!(r.samples.iter().map(|s| s.rating).collect::<Vec<_>>(), [1, 2, 2]);
}

#[test]
fn union_dedups_shared_paragraphs() {
    let pars = paragraphs(&["a", "b", "c"]);
    let mk = |k, idx: &[usize]| EvidenceSet {
        keypoint_index: k,
        ranked: idx.iter().map(|&i| ScoredParagraph { paragraph: pars[i].clone(), score: 50 }).collect(),
        warnings: vec![],
    };
    let sets = [mk(1, &[1, 0]), mk(2, &[0, 2])];
    let texts: Vec<_> = evidence_union(&sets).into_iter().map(|p| p.text.as_str()).collect();
    assert_eq!(texts, ["b", "a", "c"]);
}

#[test]
fn empty_question_list_gives_empty_manifest() {
    let (g, _) = gateway(ScriptedProvider::new());
    let systems = [SystemSpec { id: "s".into(), provider_id: "aux".into(), temperature: 0.0 }];
    let config = PipelineConfig { aux_provider: "aux".into(), ..Default::default() };
    let out = run_study_pipeline(&g, &StaticArticles::default(), &[], &systems, &config).unwrap();
    assert!(out.is_empty());
}

#[test]
fn config_errors_fail_fast() {
    let (g, _) = gateway(ScriptedProvider::new());
    let systems = [SystemSpec { id: "s".into(), provider_id: "missing".into(), temperature: 0.0 }];
    let config = PipelineConfig { aux_provider: "aux".into(), ..Default::default() };
    let q = [Question::new("q1", "Q?")];
    assert!(run_study_pipeline(&g, &StaticArticles::default(), &q, &systems, &config).is_err());
}

#[test]
fn missing_url_yields_ungrounded_assistance() {
    let (g, _) = gateway(
        ScriptedProvider::new()
            .rule(["Answer each question"], &[ANSWER])
            .rule(["Mention 1 to 3 key statements"], &["Impacts include sea level rise."])
            .rule(["Please provide a Wikipedia article"], &["No URL"])
            .fallback("No Critique"),
    );
    let systems = [SystemSpec { id: "s".into(), provider_id: "aux".into(), temperature: 0.0 }];
    let config = PipelineConfig { aux_provider: "aux".into(), ..Default::default() };
    let q = [Question::new("q1", "Why?")];
    let out = run_study_pipeline(&g, &StaticArticles::default(), &q, &systems, &config).unwrap();
    let b = &out[0];
    assert_eq!(b.status, BundleStatus::Complete);
    assert!(b.evidence.is_empty());
    assert_eq!(b.stages.fetch, StageStatus::Skipped);
    assert_eq!(b.assistance.len(), 8);
    assert!(b.assistance.iter().all(|a| !a.grounded && a.critique == Critique::NoCritique));
}

#[test]
fn answer_failure_marks_bundle_failed_without_aborting() {
    let (g, _) = gateway(
        ScriptedProvider::new()
            .rule(["Question: bad"], &[])
            .rule(["Answer each question"], &[ANSWER])
            .rule(["Mention 1 to 3"], &["No Keypoints"])
            .rule(["Please provide"], &["No URL"])
            .fallback("No Critique"),
    );
    let systems = [SystemSpec { id: "s".into(), provider_id: "aux".into(), temperature: 0.0 }];
    let config = PipelineConfig { aux_provider: "aux".into(), width: 2, ..Default::default() };
    let q = [Question::new("q1", "bad"), Question::new("q2", "fine")];
    let out = run_study_pipeline(&g, &StaticArticles::default(), &q, &systems, &config).unwrap();
    assert_eq!(out[0].status, BundleStatus::Failed);
    assert_eq!(out[0].stages.answer, StageStatus::Failed);
    assert_eq!(out[1].status, BundleStatus::Complete);
    assert_eq!(out[1].question_id.as_str(), "q2");
}
