use super::stats::{mean, quantile};
use super::AnalysisError;
use crate::domain::{
    AnswerId, AnswerSupport, Dimension, Family, KeypointSupport, LikertValue, RatingRecord, SystemId,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Answer-level attribution from keypoint labels. `contradicts` counts as
/// not supported.
pub fn aggregate_ais(labels: &[KeypointSupport]) -> Result<AnswerSupport, AnalysisError> {
    if labels.is_empty() {
        return Err(AnalysisError::EmptyInput("no keypoint labels".into()));
    }
    let folded = labels.iter().map(|l| match l {
        KeypointSupport::Fully => AnswerSupport::Fully,
        KeypointSupport::Partially => AnswerSupport::Partially,
        KeypointSupport::NotSupported | KeypointSupport::Contradicts => AnswerSupport::NotSupported,
    });
    let mut all_fully = true;
    let mut all_not = true;
    for l in folded {
        all_fully &= l == AnswerSupport::Fully;
        all_not &= l == AnswerSupport::NotSupported;
    }
    Ok(if all_fully {
        AnswerSupport::Fully
    } else if all_not {
        AnswerSupport::NotSupported
    } else {
        AnswerSupport::Partially
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueFrequency {
    pub system_id: SystemId,
    pub dimension: Dimension,
    pub issue: String,
    pub selected: usize,
    /// Rating events for the issue's dimension on this system.
    pub events: usize,
    pub percent: f64,
}

/// Percentage of rating events selecting each taxonomy issue, per system.
/// Rows are ordered by system, then taxonomy order.
pub fn issue_frequencies(records: &[RatingRecord]) -> Vec<IssueFrequency> {
    let mut by_system: BTreeMap<&SystemId, Vec<&RatingRecord>> = BTreeMap::new();
    for r in records {
        by_system.entry(&r.system_id).or_default().push(r);
    }
    let mut rows = Vec::new();
    for (system, recs) in by_system {
        for dimension in Dimension::ALL {
            let ratings: Vec<_> = recs.iter().filter_map(|r| r.rating(dimension)).collect();
            for tag in dimension.issues() {
                let selected = ratings.iter().filter(|r| r.issues.contains(tag.id)).count();
                let events = ratings.len();
                let percent = if events == 0 { 0.0 } else { 100.0 * selected as f64 / events as f64 };
                rows.push(IssueFrequency {
                    system_id: system.clone(),
                    dimension,
                    issue: tag.id.to_string(),
                    selected,
                    events,
                    percent,
                });
            }
        }
    }
    rows
}

/// An example constructed to exhibit one known issue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeededItem {
    pub answer_id: AnswerId,
    pub dimension: Dimension,
    pub issue: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRates {
    pub items: usize,
    pub any: f64,
    pub majority: f64,
    pub all: f64,
}

pub const RATERS_PER_SEEDED_ITEM: usize = 3;

/// Rates from per-item detection flags, one flag per rater.
pub fn detection_rates_from_flags(flags: &[Vec<bool>]) -> Result<DetectionRates, AnalysisError> {
    if flags.is_empty() {
        return Err(AnalysisError::EmptyInput("no seeded items".into()));
    }
    let mut counts = [0usize; RATERS_PER_SEEDED_ITEM + 1];
    for (i, item) in flags.iter().enumerate() {
        if item.len() != RATERS_PER_SEEDED_ITEM {
            return Err(AnalysisError::WrongRaterCount { item: i.to_string(), raters: item.len() });
        }
        counts[item.iter().filter(|d| **d).count()] += 1;
    }
    let pct = |min: usize| 100.0 * counts[min..].iter().sum::<usize>() as f64 / flags.len() as f64;
    Ok(DetectionRates { items: flags.len(), any: pct(1), majority: pct(2), all: pct(3) })
}

/// A rater detects a seeded item iff they selected its expected issue on its
/// dimension. Screened-out records count as non-detections.
pub fn detection_rates(seeded: &[SeededItem], records: &[RatingRecord]) -> Result<DetectionRates, AnalysisError> {
    let mut flags = Vec::with_capacity(seeded.len());
    for item in seeded {
        let item_flags: Vec<bool> = records
            .iter()
            .filter(|r| r.answer_id == item.answer_id)
            .map(|r| r.rating(item.dimension).is_some_and(|d| d.issues.contains(&item.issue)))
            .collect();
        if item_flags.len() != RATERS_PER_SEEDED_ITEM {
            return Err(AnalysisError::WrongRaterCount {
                item: item.answer_id.to_string(),
                raters: item_flags.len(),
            });
        }
        flags.push(item_flags);
    }
    detection_rates_from_flags(&flags)
}

pub const OUTLIER_SECONDS: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Screening,
    Presentational,
    Epistemological,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub count: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub q1_s: f64,
    pub q3_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    /// Durations above the outlier threshold among the inputs.
    pub outliers: usize,
}

impl DurationStats {
    fn of(mut seconds: Vec<f64>, outliers: usize) -> Option<DurationStats> {
        if seconds.is_empty() {
            return None;
        }
        seconds.sort_by(f64::total_cmp);
        Some(DurationStats {
            count: seconds.len(),
            mean_s: mean(&seconds),
            median_s: quantile(&seconds, 0.5),
            q1_s: quantile(&seconds, 0.25),
            q3_s: quantile(&seconds, 0.75),
            min_s: seconds[0],
            max_s: seconds[seconds.len() - 1],
            outliers,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub outlier_threshold_s: f64,
    pub outliers_excluded: bool,
    pub per_phase: BTreeMap<Phase, DurationStats>,
    pub per_dimension: BTreeMap<Dimension, DurationStats>,
    /// Keyed by score ("1".."5") or "dont_know".
    pub per_score: BTreeMap<String, DurationStats>,
}

#[derive(Default)]
struct Bucket {
    seconds: Vec<f64>,
    outliers: usize,
}

impl Bucket {
    fn push(&mut self, s: f64, exclude: bool) {
        let outlier = s > OUTLIER_SECONDS;
        self.outliers += usize::from(outlier);
        if !(outlier && exclude) {
            self.seconds.push(s);
        }
    }
}

/// Duration statistics per rating event. Phase durations sum the event's
/// dimension durations within a family; a phase duration is an outlier when
/// it exceeds the threshold.
pub fn timing_summary(records: &[RatingRecord], exclude_outliers: bool) -> TimingSummary {
    let mut phases: BTreeMap<Phase, Bucket> = BTreeMap::new();
    let mut dims: BTreeMap<Dimension, Bucket> = BTreeMap::new();
    let mut scores: BTreeMap<String, Bucket> = BTreeMap::new();
    let secs = |ms: u64| ms as f64 / 1000.0;
    for r in records {
        phases.entry(Phase::Screening).or_default().push(secs(r.screening.elapsed_ms), exclude_outliers);
        let mut family_totals = [0u64; 2];
        for d in &r.dimension_ratings {
            family_totals[usize::from(d.dimension.family() == Family::Epistemological)] += d.elapsed_ms;
            let s = secs(d.elapsed_ms);
            dims.entry(d.dimension).or_default().push(s, exclude_outliers);
            let key = match d.score {
                LikertValue::Score(v) => v.get().to_string(),
                LikertValue::DontKnow => "dont_know".to_string(),
            };
            scores.entry(key).or_default().push(s, exclude_outliers);
        }
        if !r.dimension_ratings.is_empty() {
            phases.entry(Phase::Presentational).or_default().push(secs(family_totals[0]), exclude_outliers);
            phases.entry(Phase::Epistemological).or_default().push(secs(family_totals[1]), exclude_outliers);
        }
    }
    fn finish<K: Ord>(m: BTreeMap<K, Bucket>) -> BTreeMap<K, DurationStats> {
        m.into_iter().filter_map(|(k, b)| DurationStats::of(b.seconds, b.outliers).map(|s| (k, s))).collect()
    }
    TimingSummary {
        outlier_threshold_s: OUTLIER_SECONDS,
        outliers_excluded: exclude_outliers,
        per_phase: finish(phases),
        per_dimension: finish(dims),
        per_score: finish(scores),
    }
}
