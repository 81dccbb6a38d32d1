//! Agreement, significance, attribution and timing statistics over study
//! rating records, plus the assembled study report.

mod agreement;
mod report;
mod stats;
mod tables;


pub use agreement::{krippendorff_alpha, mean_pairwise_distance, AgreementResult, Metric, RatingMatrix};
pub use report::{
    build_report, build_report_from_events, render_text, AgreementRow, AisAnswerLabel, AisCorrelation,
    AisSummary, IssueAgreementRow, ReportOptions, SignificanceTable, SourceRef, StudyReport, SystemDimensionCi,
};
pub use stats::{
    average_ranks, bootstrap_mean_ci, mean, quantile, spearman, welch_matrix, welch_t_test, Correlation, MeanCi,
    SignificanceCell, SignificanceMatrix, Symbol, WelchResult, DEFAULT_RESAMPLES,
};
pub use tables::{
    aggregate_ais, detection_rates, detection_rates_from_flags, issue_frequencies, timing_summary,
    DetectionRates, DurationStats, IssueFrequency, Phase, SeededItem, TimingSummary, OUTLIER_SECONDS,
    RATERS_PER_SEEDED_ITEM,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("no item has two or more ratings")]
    NoPairs,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("item {item} has {raters} raters, expected exactly 3")]
    WrongRaterCount { item: String, raters: usize },
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("study has no completed ratings: {0}")]
    EmptyStudy(String),
}

impl AnalysisError {
    pub fn code(&self) -> &'static str {
        match self {
            AnalysisError::EmptyInput(_) => "empty_input",
            AnalysisError::NoPairs => "no_pairs",
            AnalysisError::InsufficientData(_) => "insufficient_data",
            AnalysisError::LengthMismatch { .. } => "length_mismatch",
            AnalysisError::WrongRaterCount { .. } => "wrong_rater_count",
            AnalysisError::DegenerateSample(_) => "degenerate_sample",
            AnalysisError::EmptyStudy(_) => "empty_study",
        }
    }
}
