//! Rating values, per-dimension ratings and their validation rules.

use super::taxonomy::{Dimension, OTHER_TEXT_MAX_CHARS};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeSet;
use std::fmt;

macro_rules! id_newtype {
    ($($(#[$meta:meta])* $name:ident),* $(,)?) => {$(
        $(#[$meta])*
        #[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    )*};
}

id_newtype!(StudyId, QuestionId, SystemId, RaterId, AnswerId);

/// A point on the 5-point agreement scale (1 = disagree completely).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Score(u8);

impl Score {
    pub fn new(value: u8) -> Option<Score> {
        (1..=5).contains(&value).then_some(Score(value))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn is_low(self) -> bool {
        self.0 <= 2
    }
}

/// A scale answer: a score or the distinct "I don't know" outcome, which is
/// never coerced to a number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LikertValue {
    Score(Score),
    DontKnow,
}

impl LikertValue {
    pub fn score(value: u8) -> Option<LikertValue> {
        Score::new(value).map(LikertValue::Score)
    }

    pub fn numeric(self) -> Option<f64> {
        match self {
            LikertValue::Score(s) => Some(f64::from(s.get())),
            LikertValue::DontKnow => None,
        }
    }

    pub fn is_low(self) -> bool {
        matches!(self, LikertValue::Score(s) if s.is_low())
    }
}

impl fmt::Display for LikertValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LikertValue::Score(s) => write!(f, "{}", s.get()),
            LikertValue::DontKnow => f.write_str("dont_know"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LikertRepr {
    Score(u8),
    Token(String),
}

impl Serialize for LikertValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            LikertValue::Score(s) => LikertRepr::Score(s.get()),
            LikertValue::DontKnow => LikertRepr::Token("dont_know".into()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LikertValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match LikertRepr::deserialize(deserializer)? {
            LikertRepr::Score(n) => LikertValue::score(n)
                .ok_or_else(|| D::Error::custom(format!("likert score {n} outside 1..5"))),
            LikertRepr::Token(t) if t == "dont_know" => Ok(LikertValue::DontKnow),
            LikertRepr::Token(t) => Err(D::Error::custom(format!("invalid likert value `{t}`"))),
        }
    }
}

/// One rater's answer for one dimension of one example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionRating {
    pub dimension: Dimension,
    pub score: LikertValue,
    #[serde(default)]
    pub issues: BTreeSet<String>,
    /// Free text for the "other" issue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other_text: Option<String>,
    #[serde(default)]
    pub assistance_shown: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assistance_helpfulness: Option<LikertValue>,
    #[serde(default)]
    pub elapsed_ms: u64,
}

impl DimensionRating {
    pub fn new(dimension: Dimension, score: LikertValue) -> Self {
        DimensionRating {
            dimension,
            score,
            issues: BTreeSet::new(),
            other_text: None,
            assistance_shown: false,
            assistance_helpfulness: None,
            elapsed_ms: 0,
        }
    }

    pub fn with_issues<I, S>(mut self, issues: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.issues = issues.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum RatingViolation {
    #[error("a rating of 1 or 2 requires at least one issue")]
    IssueRequired,
    #[error("issues may only be selected for ratings of 1 or 2")]
    IssueForbidden,
    #[error("issue `{issue}` does not belong to dimension {dimension}")]
    ForeignIssue { dimension: Dimension, issue: String },
    #[error("\"don't know\" is only offered for epistemological dimensions")]
    DontKnowForbidden,
    #[error("helpfulness may only be reported when assistance was shown")]
    HelpfulnessWithoutAssistance,
    #[error("helpfulness must be a score between 1 and 5")]
    HelpfulnessOutOfScale,
    #[error("free text is only accepted together with the `other` issue")]
    FreeTextWithoutOther,
    #[error("free text exceeds {OTHER_TEXT_MAX_CHARS} characters")]
    FreeTextTooLong,
}

impl RatingViolation {
    pub fn code(&self) -> &'static str {
        match self {
            RatingViolation::IssueRequired => "issue_required",
            RatingViolation::IssueForbidden => "issue_forbidden",
            RatingViolation::ForeignIssue { .. } => "foreign_issue",
            RatingViolation::DontKnowForbidden => "dont_know_forbidden",
            RatingViolation::HelpfulnessWithoutAssistance => "helpfulness_without_assistance",
            RatingViolation::HelpfulnessOutOfScale => "helpfulness_out_of_scale",
            RatingViolation::FreeTextWithoutOther => "free_text_without_other",
            RatingViolation::FreeTextTooLong => "free_text_too_long",
        }
    }
}

pub fn validate_rating(rating: &DimensionRating) -> Result<(), RatingViolation> {
    let dim = rating.dimension;
    if rating.score == LikertValue::DontKnow && !dim.is_epistemological() {
        return Err(RatingViolation::DontKnowForbidden);
    }
    if let Some(foreign) = rating.issues.iter().find(|i| dim.issue(i).is_none()) {
        return Err(RatingViolation::ForeignIssue { dimension: dim, issue: foreign.clone() });
    }
    match (rating.score.is_low(), rating.issues.is_empty()) {
        (true, true) => return Err(RatingViolation::IssueRequired),
        (false, false) => return Err(RatingViolation::IssueForbidden),
        _ => {}
    }
    match rating.assistance_helpfulness {
        Some(_) if !rating.assistance_shown => {
            return Err(RatingViolation::HelpfulnessWithoutAssistance)
        }
        Some(LikertValue::DontKnow) => return Err(RatingViolation::HelpfulnessOutOfScale),
        _ => {}
    }
    if let Some(text) = &rating.other_text {
        if !rating.issues.contains("other") {
            return Err(RatingViolation::FreeTextWithoutOther);
        }
        if text.chars().count() > OTHER_TEXT_MAX_CHARS {
            return Err(RatingViolation::FreeTextTooLong);
        }
    }
    Ok(())
}

/// Answers to the yes/no screening questions; any "no" skips the example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningResult {
    pub answers: Vec<bool>,
    pub passed: bool,
    #[serde(default)]
    pub elapsed_ms: u64,
}

impl ScreeningResult {
    pub fn from_answers(answers: Vec<bool>, elapsed_ms: u64) -> Self {
        let passed = answers.iter().all(|a| *a);
        ScreeningResult { answers, passed, elapsed_ms }
    }
}

/// Support of a single keypoint by its evidence passages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypointSupport {
    Fully,
    Partially,
    NotSupported,
    Contradicts,
}

impl KeypointSupport {
    pub const ALL: [KeypointSupport; 4] = [
        KeypointSupport::Fully,
        KeypointSupport::Partially,
        KeypointSupport::NotSupported,
        KeypointSupport::Contradicts,
    ];
}

/// Answer-level attribution; there is no answer-level "contradicts".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerSupport {
    Fully,
    Partially,
    NotSupported,
}

impl AnswerSupport {
    pub const ALL: [AnswerSupport; 3] =
        [AnswerSupport::Fully, AnswerSupport::Partially, AnswerSupport::NotSupported];

    /// Ordinal code used when correlating attribution with ratings.
    pub fn ordinal(self) -> f64 {
        match self {
            AnswerSupport::NotSupported => 0.0,
            AnswerSupport::Partially => 1.0,
            AnswerSupport::Fully => 2.0,
        }
    }
}

/// A completed rating of one answer by one rater.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub study_id: StudyId,
    pub question_id: QuestionId,
    pub answer_id: AnswerId,
    pub system_id: SystemId,
    pub rater_id: RaterId,
    pub screening: ScreeningResult,
    #[serde(default)]
    pub dimension_ratings: Vec<DimensionRating>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordViolation {
    #[error("screening result is inconsistent with its answers")]
    InconsistentScreening,
    #[error("a screened-out record carries dimension ratings")]
    RatingsAfterFailedScreening,
    #[error("expected one rating per dimension in questionnaire order")]
    IncompleteRatings,
    #[error("{dimension}: {violation}")]
    InvalidRating { dimension: Dimension, violation: RatingViolation },
}

impl RatingRecord {
    pub fn check(&self) -> Result<(), RecordViolation> {
        if self.screening.passed != self.screening.answers.iter().all(|a| *a) {
            return Err(RecordViolation::InconsistentScreening);
        }
        if !self.screening.passed {
            return if self.dimension_ratings.is_empty() {
                Ok(())
            } else {
                Err(RecordViolation::RatingsAfterFailedScreening)
            };
        }
        let dims: Vec<_> = self.dimension_ratings.iter().map(|r| r.dimension).collect();
        if dims != Dimension::ALL {
            return Err(RecordViolation::IncompleteRatings);
        }
        for r in &self.dimension_ratings {
            validate_rating(r).map_err(|violation| RecordViolation::InvalidRating {
                dimension: r.dimension,
                violation,
            })?;
        }
        Ok(())
    }

    pub fn rating(&self, dimension: Dimension) -> Option<&DimensionRating> {
        self.dimension_ratings.iter().find(|r| r.dimension == dimension)
    }
}
