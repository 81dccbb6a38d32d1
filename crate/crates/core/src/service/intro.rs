//! Tutorial items and the scored admission test that gate new raters.

use super::ServiceError;
use crate::domain::{Dimension, DimensionRating, RaterId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TutorialItem {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub dimension: Dimension,
    pub main_issue: String,
    pub hint: String,
    pub feedback: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TutorialOutcome {
    Advance { feedback: String },
    RetryWithHint { hint: String },
}

impl TutorialOutcome {
    pub fn advanced(&self) -> bool {
        matches!(self, TutorialOutcome::Advance { .. })
    }
}

/// Advances iff the response gives a low score on the item's dimension and
/// names its main issue. Other selected issues are tolerated.
pub fn tutorial_step(item: &TutorialItem, response: &DimensionRating) -> TutorialOutcome {
    let ok = response.dimension == item.dimension
        && response.score.is_low()
        && response.issues.contains(&item.main_issue);
    if ok {
        TutorialOutcome::Advance { feedback: item.feedback.clone() }
    } else {
        TutorialOutcome::RetryWithHint { hint: item.hint.clone() }
    }
}

fn tutorial_item(
    id: &str,
    question: &str,
    answer: &str,
    dimension: Dimension,
    main_issue: &str,
    hint: &str,
    feedback: &str,
) -> TutorialItem {
    TutorialItem {
        id: id.into(),
        question: question.into(),
        answer: answer.into(),
        dimension,
        main_issue: main_issue.into(),
        hint: hint.into(),
        feedback: feedback.into(),
    }
}

/// Four items, easiest first.
pub fn default_tutorial() -> Vec<TutorialItem> {
    vec![
        tutorial_item(
            "tutorial-1",
            "What is the greenhouse effect?",
            "its when gases like co2 kinda trap heat lol, so the planet gets warmer n stuff",
            Dimension::Style,
            "too_informal",
            "Look at the register of the language rather than its content.",
            "Right: the content is roughly fine, but slang and missing capitalisation make it too informal.",
        ),
        tutorial_item(
            "tutorial-2",
            "Why are glaciers retreating?",
            "Glaciers are retreating mainly because of rising air temperatures. Glaciers are retreating \
             mainly because of rising air temperatures, which increase melting in summer.",
            Dimension::Style,
            "repetitive",
            "Read the two sentences side by side.",
            "Right: the second sentence repeats the first almost word for word.",
        ),
        tutorial_item(
            "tutorial-3",
            "How much has global mean sea level risen since 1900?",
            "Sea level has changed a lot over time and will keep changing in many places.",
            Dimension::Specificity,
            "vague",
            "Does the answer give the reader anything they could check or quantify?",
            "Right: the question asks for an amount and the answer gives no figure or range at all.",
        ),
        tutorial_item(
            "tutorial-4",
            "Does methane warm the planet more than carbon dioxide?",
            "Methane has no effect on warming because it leaves the atmosphere within a few days.",
            Dimension::Accuracy,
            "incorrect",
            "Check the claim about how long methane stays in the atmosphere.",
            "Right: methane persists for about a decade and is a strong greenhouse gas, so the claim is wrong.",
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedIssue {
    pub dimension: Dimension,
    pub issue: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissionItem {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub expected: Vec<ExpectedIssue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissionWeights {
    pub detect: i64,
    pub miss: i64,
    pub over: i64,
}

impl Default for AdmissionWeights {
    fn default() -> Self {
        AdmissionWeights { detect: 2, miss: 1, over: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissionRubric {
    pub items: Vec<AdmissionItem>,
    #[serde(default)]
    pub weights: AdmissionWeights,
    pub threshold: i64,
}

impl Default for AdmissionRubric {
    fn default() -> Self {
        let item = |id: &str, question: &str, answer: &str, dimension, issue: &str| AdmissionItem {
            id: id.into(),
            question: question.into(),
            answer: answer.into(),
            expected: vec![ExpectedIssue { dimension, issue: issue.into() }],
        };
        AdmissionRubric {
            items: vec![
                item(
                    "admission-1",
                    "What are the main sources of greenhouse gas emissions?",
                    "The main sources of greenhouse gas emisions are burning fosil fuels for electricty, \
                     transport and industry, followed by agriculture and deforestation.",
                    Dimension::Correctness,
                    "incorrect_spelling",
                ),
                item(
                    "admission-2",
                    "Is climate change affecting rainfall in the Sahel?",
                    "Climate change is a hoax pushed by people who want to raise taxes, so anything you \
                     read about the Sahel is exaggerated.",
                    Dimension::Tone,
                    "biased",
                ),
                item(
                    "admission-3",
                    "How will warming affect crop yields in South Asia by 2050?",
                    "Warming will change crop yields. Some crops may be affected more than others.",
                    Dimension::Completeness,
                    "does_not_address_region",
                ),
            ],
            weights: AdmissionWeights::default(),
            threshold: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissionItemResponse {
    pub item_id: String,
    #[serde(default)]
    pub ratings: Vec<DimensionRating>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub item_id: String,
    pub detected: Vec<ExpectedIssue>,
    pub undetected: Vec<ExpectedIssue>,
    pub over_detected: Vec<ExpectedIssue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionAttempt {
    pub rater_id: RaterId,
    pub items: Vec<ItemOutcome>,
    pub score: i64,
    pub passed: bool,
}

/// Scores every rubric item; items without a response count as nothing
/// selected.
pub fn score_admission(
    rater_id: &RaterId,
    responses: &[AdmissionItemResponse],
    rubric: &AdmissionRubric,
) -> Result<AdmissionAttempt, ServiceError> {
    for r in responses {
        if !rubric.items.iter().any(|i| i.id == r.item_id) {
            return Err(ServiceError::UnknownItem(r.item_id.clone()));
        }
    }
    let w = rubric.weights;
    let mut score = 0;
    let mut items = Vec::with_capacity(rubric.items.len());
    for item in &rubric.items {
        let ratings: Vec<&DimensionRating> =
            responses.iter().filter(|r| r.item_id == item.id).flat_map(|r| &r.ratings).collect();
        let selected: BTreeSet<ExpectedIssue> = ratings
            .iter()
            .flat_map(|r| r.issues.iter().map(|i| ExpectedIssue { dimension: r.dimension, issue: i.clone() }))
            .collect();
        let low_on = |d: Dimension| ratings.iter().any(|r| r.dimension == d && r.score.is_low());
        let mut outcome = ItemOutcome {
            item_id: item.id.clone(),
            detected: Vec::new(),
            undetected: Vec::new(),
            over_detected: Vec::new(),
        };
        for e in &item.expected {
            if selected.contains(e) && low_on(e.dimension) {
                score += w.detect;
                outcome.detected.push(e.clone());
            } else {
                score -= w.miss;
                outcome.undetected.push(e.clone());
            }
        }
        for s in selected {
            if !item.expected.contains(&s) {
                score -= w.over;
                outcome.over_detected.push(s);
            }
        }
        items.push(outcome);
    }
    Ok(AdmissionAttempt { rater_id: rater_id.clone(), items, score, passed: score >= rubric.threshold })
}
