//! Dimension and issue taxonomy shown to raters.
//!
//! Statement and issue texts are rater-facing and rendered verbatim by the UI,
//! so they must not be edited casually: the issue ids double as column keys in
//! the issue-frequency tables.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Version of the exported taxonomy document.
pub const TAXONOMY_VERSION: &str = "1";

/// Maximum length (in characters) of the free text attached to an "other" issue.
pub const OTHER_TEXT_MAX_CHARS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Presentational,
    Epistemological,
}

/// The eight rated dimensions, in questionnaire order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Style,
    Clarity,
    Correctness,
    Tone,
    Accuracy,
    Specificity,
    Completeness,
    Uncertainty,
}

impl Dimension {
    pub const ALL: [Dimension; 8] = [
        Dimension::Style,
        Dimension::Clarity,
        Dimension::Correctness,
        Dimension::Tone,
        Dimension::Accuracy,
        Dimension::Specificity,
        Dimension::Completeness,
        Dimension::Uncertainty,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Dimension::Style => "style",
            Dimension::Clarity => "clarity",
            Dimension::Correctness => "correctness",
            Dimension::Tone => "tone",
            Dimension::Accuracy => "accuracy",
            Dimension::Specificity => "specificity",
            Dimension::Completeness => "completeness",
            Dimension::Uncertainty => "uncertainty",
        }
    }

    pub fn family(self) -> Family {
        match self {
            Dimension::Style | Dimension::Clarity | Dimension::Correctness | Dimension::Tone => {
                Family::Presentational
            }
            _ => Family::Epistemological,
        }
    }

    pub fn is_epistemological(self) -> bool {
        self.family() == Family::Epistemological
    }

    /// Position in the questionnaire (0-based).
    pub fn position(self) -> usize {
        Dimension::ALL.iter().position(|d| *d == self).unwrap()
    }

    /// Statement raters agree or disagree with in the rating interface.
    pub fn statement(self) -> &'static str {
        match self {
            Dimension::Style => "The information is presented well (for a general audience).",
            Dimension::Clarity => "The answer is clear and easy to understand.",
            Dimension::Correctness => "The language in the answer does not contain mistakes.",
            Dimension::Tone => "The tone of the answer is neutral and unbiased.",
            Dimension::Accuracy => "The answer is accurate.",
            Dimension::Specificity => {
                "The answer addresses only what the question asks for, without adding irrelevant information."
            }
            Dimension::Completeness => "The answer addresses everything the question asks for.",
            Dimension::Uncertainty => "The answer appropriately conveys the uncertainty involved.",
        }
    }

    /// Expanded statement inserted into the assistance-generation prompts.
    pub fn assistance_statement(self) -> &'static str {
        match self {
            Dimension::Style => {
                "The information is presented well for a general audience. In particular, the answer is not too long or too short, there is no repetition in the text, and the answer is not too informal or too technical."
            }
            Dimension::Clarity => {
                "The answer is clear and easy to understand. For example, if there are numbers and formulae in the answer, they are easy to understand. Furthermore, sentences are not too long or too short."
            }
            Dimension::Correctness => {
                "The language in the answer does not contain mistakes. In particular, there are no grammatical, spelling, or punctuation errors."
            }
            Dimension::Tone => {
                "The tone of the answer is neutral and unbiased. In particular, the tone is not negative and the answer does not try to convince the reader of an opinion or belief."
            }
            Dimension::Accuracy => {
                "The answer is accurate. In particular, it does not take scientific findings out of context, does not contradict itself, does not rely on anecdotal evidence, and does not misuse key terms or scientific terminology."
            }
            Dimension::Specificity => {
                "There is no irrelevant statement with respect to the question in the answer, and there is no vague or generic statement in the answer."
            }
            Dimension::Completeness => {
                "The answer addresses everything the question asks for. In particular, it does not miss any part of the question and provides enough necessary details, e.g., numbers, statistics, and details. If the question asks for a specific time range or region, the answer correctly provides that information."
            }
            Dimension::Uncertainty => {
                "If there is an uncertainty involved in the scientific community, the answer appropriately conveys that uncertainty. Note that it may be appropriate not to mention uncertainty at all."
            }
        }
    }

    /// Statement block used by the LLM rater, listing the selectable problems.
    pub fn rater_statement(self) -> &'static str {
        match self {
            Dimension::Style => {
                "The information is presented well (for a general audience).\nIf you disagree, what is the problem with the answer? Choose one of the following: too informal/colloquial, answer too long, answer too short, inconsistent language/style/terminology, repetitive, other.\nIf you choose other, please explain your rating."
            }
            Dimension::Clarity => {
                "The answer is clear and easy to understand.\nIf you disagree, what is the problem with the answer? Choose one of the following: sentences too long, language too technical, numbers/formulae hard to understand, other.\nIf you choose other, please explain your rating."
            }
            Dimension::Correctness => {
                "The language in the answer does not contain mistakes.\nIf you disagree, what is the problem with the answer? Choose one of the following: sentence is incomplete, spelling mistakes, punctuation mistakes, grammatical errors, other.\nIf you choose other, please explain your rating."
            }
            Dimension::Tone => {
                "The tone of the answer is neutral and unbiased.\nIf you disagree, what is the problem with the answer? Choose one of the following: the answer is biased, tries to convince me of an opinion/belief, the tone is too negative, other.\nIf you choose other, please explain your rating."
            }
            Dimension::Accuracy => {
                "The answer is accurate.\nIf you disagree, what is the problem with the answer? Choose one of the following: incorrect, takes scientific findings out of context, self-contradictory, anecdotal, wrong use of key terms/scientific terminology, other.\nIf you choose other, please explain your rating."
            }
            Dimension::Specificity => {
                "The answer addresses only what the question asks for, without adding irrelevant information.\nIf you disagree, what is the problem with the answer? Choose one of the following: includes irrelevant parts, too vague/unspecific, other.\nIf you choose other, please explain your rating."
            }
            Dimension::Completeness => {
                "The answer addresses everything the question asks for.\nIf you disagree, what is the problem with the answer? Choose one of the following: misses important parts of the answer, does not address the region the question asks about, does not address time or time range the question asks about, does not give enough detail (e.g., numbers, statistics, details), ignores relevant scientific knowledge, other.\nIf you choose other, please explain your rating."
            }
            Dimension::Uncertainty => {
                "The answer appropriately conveys the uncertainty involved.\nIf you disagree, what is the problem with the answer? Choose one of the following: degree of (un)certainty not given when it should be, agreement in the scientific community not given when important, contradicting evidence (if existing) not mentioned, other.\nIf you choose other, please explain your rating."
            }
        }
    }

    pub fn issues(self) -> impl Iterator<Item = &'static IssueTag> {
        ISSUES.iter().filter(move |i| i.dimension == self)
    }

    pub fn issue(self, id: &str) -> Option<&'static IssueTag> {
        self.issues().find(|i| i.id == id)
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown dimension `{0}`")]
pub struct UnknownDimension(pub String);

impl FromStr for Dimension {
    type Err = UnknownDimension;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.id() == s)
            .ok_or_else(|| UnknownDimension(s.to_string()))
    }
}

/// A selectable issue attached to a low rating. Ids are unique per dimension
/// only: every dimension has its own `other`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IssueTag {
    pub id: &'static str,
    pub dimension: Dimension,
    pub label: &'static str,
    pub allows_free_text: bool,
}

const fn tag(dimension: Dimension, id: &'static str, label: &'static str) -> IssueTag {
    IssueTag { id, dimension, label, allows_free_text: false }
}

const fn other(dimension: Dimension) -> IssueTag {
    IssueTag { id: "other", dimension, label: "other", allows_free_text: true }
}

use Dimension::*;

static ISSUES: [IssueTag; 38] = [
    tag(Style, "too_informal", "too informal/colloquial"),
    tag(Style, "too_long", "answer too long"),
    tag(Style, "too_short", "answer too short"),
    tag(Style, "inconsistent", "inconsistent language/style/terminology"),
    tag(Style, "repetitive", "repetitive"),
    other(Style),
    tag(Clarity, "sentences_too_long", "sentences too long"),
    tag(Clarity, "too_technical", "language too technical"),
    tag(Clarity, "hard_math", "numbers/formulae hard to understand"),
    other(Clarity),
    tag(Correctness, "incomplete_sentence", "sentence is incomplete"),
    tag(Correctness, "incorrect_spelling", "spelling mistakes"),
    tag(Correctness, "punctuation_mistakes", "punctuation mistakes"),
    tag(Correctness, "incorrect_grammar", "grammatical errors"),
    other(Correctness),
    tag(Tone, "biased", "the answer is biased"),
    tag(Tone, "persuasive", "tries to convince me of an opinion/belief"),
    tag(Tone, "negative", "the tone is too negative"),
    other(Tone),
    tag(Accuracy, "incorrect", "incorrect"),
    tag(Accuracy, "science_out_of_context", "takes scientific findings out of context"),
    tag(Accuracy, "self_contradictory", "self-contradictory"),
    tag(Accuracy, "anecdotal", "anecdotal"),
    tag(Accuracy, "wrong_use_of_terms", "wrong use of key terms/scientific terminology"),
    other(Accuracy),
    tag(Specificity, "irrelevant_info", "includes irrelevant parts"),
    tag(Specificity, "vague", "too vague/unspecific"),
    other(Specificity),
    tag(Completeness, "does_not_address_main_parts", "misses important parts of the answer"),
    tag(
        Completeness,
        "does_not_address_region",
        "does not address the region the question asks about",
    ),
    tag(
        Completeness,
        "does_not_address_time",
        "does not address time or time range the question asks about",
    ),
    tag(
        Completeness,
        "not_enough_detail",
        "does not give enough detail (e.g. numbers, statistics, details)",
    ),
    tag(Completeness, "ignores_science", "ignores relevant scientific knowledge"),
    other(Completeness),
    tag(Uncertainty, "uncertainty_missing", "degree of (un)certainty not given when it should be"),
    tag(
        Uncertainty,
        "consensus_missing",
        "agreement in the scientific community not given when important",
    ),
    tag(
        Uncertainty,
        "contradicting_evidence_missing",
        "contradicting evidence (if existing) not mentioned",
    ),
    other(Uncertainty),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DimensionEntry {
    pub id: Dimension,
    pub family: Family,
    pub statement: &'static str,
    pub allows_dont_know: bool,
}

/// Exportable taxonomy document served to the rater UI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Catalog {
    pub version: &'static str,
    pub question: &'static str,
    pub scale: [&'static str; 5],
    pub dont_know_label: &'static str,
    pub dimensions: Vec<DimensionEntry>,
    pub issues: Vec<IssueTag>,
}

impl Catalog {
    pub fn issues_for(&self, dimension: Dimension) -> Vec<&IssueTag> {
        self.issues.iter().filter(|i| i.dimension == dimension).collect()
    }
}

pub const LIKERT_LABELS: [&str; 5] =
    ["disagree completely", "disagree", "neither", "agree", "agree completely"];

pub fn catalog() -> Catalog {
    Catalog {
        version: TAXONOMY_VERSION,
        question: "To what extent do you agree with the statement below?",
        scale: LIKERT_LABELS,
        dont_know_label: "I don't know",
        dimensions: Dimension::ALL
            .into_iter()
            .map(|d| DimensionEntry {
                id: d,
                family: d.family(),
                statement: d.statement(),
                allows_dont_know: d.is_epistemological(),
            })
            .collect(),
        issues: ISSUES.to_vec(),
    }
}
