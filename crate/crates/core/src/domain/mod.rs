//! Taxonomy, rating scales and validation rules shared by every other module.

mod question;
mod rating;
mod taxonomy;

pub use question::Question;
pub use rating::{
    validate_rating, AnswerId, AnswerSupport, DimensionRating, KeypointSupport, LikertValue,
    QuestionId, RaterId, RatingRecord, RatingViolation, RecordViolation, Score, ScreeningResult,
    StudyId, SystemId,
};
pub use taxonomy::{
    catalog, Catalog, Dimension, DimensionEntry, Family, IssueTag, UnknownDimension,
    LIKERT_LABELS, OTHER_TEXT_MAX_CHARS, TAXONOMY_VERSION,
};
