use super::agreement::{krippendorff_alpha, mean_pairwise_distance, Metric, RatingMatrix};
use super::stats::{bootstrap_mean_ci, mean, spearman, welch_matrix, Correlation, SignificanceMatrix, DEFAULT_RESAMPLES};
use super::tables::{
    aggregate_ais, detection_rates, issue_frequencies, timing_summary, DetectionRates, IssueFrequency, SeededItem,
    TimingSummary,
};
use super::AnalysisError;
use crate::domain::{AnswerId, AnswerSupport, Dimension, Family, KeypointSupport, RaterId, RatingRecord, StudyId, SystemId};
use crate::service::{AisRecord, Event, EventBody, ServiceState};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    pub seed: u64,
    pub resamples: usize,
    pub likert_metric: Metric,
    pub issue_metric: Metric,
    pub exclude_timing_outliers: bool,
    /// Seeded-issue items; detection rates are reported when non-empty.
    pub seeded: Vec<SeededItem>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            seed: 0,
            resamples: DEFAULT_RESAMPLES,
            likert_metric: Metric::Ordinal,
            issue_metric: Metric::Nominal,
            exclude_timing_outliers: false,
            seeded: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDimensionCi {
    pub system_id: SystemId,
    pub dimension: Dimension,
    /// Answers contributing an item mean.
    pub items: usize,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub dont_know: usize,
    /// Answers dropped because every rater chose "don't know".
    pub dropped_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceTable {
    pub dimension: Dimension,
    pub systems: Vec<SystemId>,
    pub cells: SignificanceMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub dimension: Dimension,
    pub metric: Metric,
    pub alpha: Option<f64>,
    pub observed_disagreement: Option<f64>,
    pub expected_disagreement: Option<f64>,
    pub mean_pairwise_distance: Option<f64>,
    pub items: usize,
    pub dont_know: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueAgreementRow {
    pub dimension: Dimension,
    pub issue: String,
    pub metric: Metric,
    pub alpha: Option<f64>,
    /// Percentage of rater pairs on the same answer that both selected or
    /// both left the issue unselected.
    pub pairwise_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisAnswerLabel {
    pub answer_id: AnswerId,
    pub system_id: SystemId,
    pub rater_id: RaterId,
    pub label: AnswerSupport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisCorrelation {
    pub dimension: Dimension,
    #[serde(flatten)]
    pub correlation: Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisSummary {
    pub submissions: usize,
    pub keypoints: usize,
    pub keypoint_percent: BTreeMap<KeypointSupport, f64>,
    pub answer_percent: BTreeMap<AnswerSupport, f64>,
    pub answers: Vec<AisAnswerLabel>,
    /// Spearman correlation between answer-level attribution and the mean
    /// rating of the same answer.
    pub correlations: Vec<AisCorrelation>,
}

/// Where a rating or labeling came from in the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRef {
    pub study_id: StudyId,
    pub answer_id: AnswerId,
    pub rater_id: RaterId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment_id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub event_seqs: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub seed: u64,
    pub resamples: usize,
    pub systems: Vec<SystemId>,
    pub records: usize,
    pub screened_out: usize,
    pub means: Vec<SystemDimensionCi>,
    pub significance: Vec<SignificanceTable>,
    pub agreement: Vec<AgreementRow>,
    pub issue_agreement: Vec<IssueAgreementRow>,
    pub issue_frequencies: Vec<IssueFrequency>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ais: Option<AisSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionRates>,
    pub timing: TimingSummary,
    pub sources: Vec<SourceRef>,
    pub warnings: Vec<String>,
}

impl StudyReport {
    /// Pretty JSON with a trailing newline; stable for a given input and seed.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn ci(&self, system: &SystemId, dimension: Dimension) -> Option<&SystemDimensionCi> {
        self.means.iter().find(|m| &m.system_id == system && m.dimension == dimension)
    }
}

/// Per-answer means over raters for one system and dimension. Returns the
/// item means, the number of "don't know" ratings and the number of answers
/// where nobody gave a score.
fn item_means(records: &[&RatingRecord], dimension: Dimension) -> (Vec<(AnswerId, f64)>, usize, usize) {
    let mut by_item: BTreeMap<&AnswerId, Vec<Option<f64>>> = BTreeMap::new();
    for r in records {
        if let Some(d) = r.rating(dimension) {
            by_item.entry(&r.answer_id).or_default().push(d.score.numeric());
        }
    }
    let mut dont_know = 0;
    let mut dropped = 0;
    let mut means = Vec::new();
    for (answer, scores) in by_item {
        dont_know += scores.iter().filter(|s| s.is_none()).count();
        let present: Vec<f64> = scores.into_iter().flatten().collect();
        if present.is_empty() {
            dropped += 1;
        } else {
            means.push((answer.clone(), mean(&present)));
        }
    }
    (means, dont_know, dropped)
}

fn pairwise_agreement(matrix: &RatingMatrix) -> Option<f64> {
    let mut agree = 0usize;
    let mut pairs = 0usize;
    for row in &matrix.cells {
        let v: Vec<f64> = row.iter().flatten().copied().collect();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                pairs += 1;
                agree += usize::from(v[i] == v[j]);
            }
        }
    }
    (pairs > 0).then(|| 100.0 * agree as f64 / pairs as f64)
}

fn ais_summary(ais: &[AisRecord], rated: &[&RatingRecord], warnings: &mut Vec<String>) -> Option<AisSummary> {
    if ais.is_empty() {
        return None;
    }
    let mut keypoint_counts: BTreeMap<KeypointSupport, usize> = KeypointSupport::ALL.iter().map(|k| (*k, 0)).collect();
    let mut answer_counts: BTreeMap<AnswerSupport, usize> = AnswerSupport::ALL.iter().map(|a| (*a, 0)).collect();
    let mut answers = Vec::new();
    for rec in ais {
        let labels: Vec<KeypointSupport> = rec.labels.iter().map(|l| l.label).collect();
        for l in &labels {
            *keypoint_counts.get_mut(l).expect("all labels present") += 1;
        }
        match aggregate_ais(&labels) {
            Ok(label) => {
                *answer_counts.get_mut(&label).expect("all labels present") += 1;
                answers.push(AisAnswerLabel {
                    answer_id: rec.answer_id.clone(),
                    system_id: rec.system_id.clone(),
                    rater_id: rec.rater_id.clone(),
                    label,
                });
            }
            Err(e) => warnings.push(format!("ais {} by {}: {e}", rec.answer_id, rec.rater_id)),
        }
    }
    let keypoints: usize = keypoint_counts.values().sum();
    let pct = |n: usize, d: usize| if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 };

    let mut ais_by_answer: BTreeMap<&AnswerId, Vec<f64>> = BTreeMap::new();
    for a in &answers {
        ais_by_answer.entry(&a.answer_id).or_default().push(a.label.ordinal());
    }
    let mut correlations = Vec::new();
    for dimension in Dimension::ALL {
        let (means, _, _) = item_means(rated, dimension);
        let (x, y): (Vec<f64>, Vec<f64>) = means
            .iter()
            .filter_map(|(answer, m)| ais_by_answer.get(answer).map(|v| (mean(v), *m)))
            .unzip();
        if let Ok(correlation) = spearman(&x, &y) {
            correlations.push(AisCorrelation { dimension, correlation });
        }
    }
    Some(AisSummary {
        submissions: ais.len(),
        keypoints,
        keypoint_percent: keypoint_counts.into_iter().map(|(k, n)| (k, pct(n, keypoints))).collect(),
        answer_percent: answer_counts.iter().map(|(k, n)| (*k, pct(*n, answers.len()))).collect(),
        answers,
        correlations,
    })
}

/// Assembles every table from finished rating records and attribution
/// labelings. Deterministic for a given input order and seed.
pub fn build_report(
    records: &[RatingRecord],
    ais: &[AisRecord],
    options: &ReportOptions,
) -> Result<StudyReport, AnalysisError> {
    let rated: Vec<&RatingRecord> = records.iter().filter(|r| r.screening.passed).collect();
    if rated.is_empty() && ais.is_empty() {
        return Err(AnalysisError::EmptyStudy("no completed rating or attribution".into()));
    }
    let mut warnings = Vec::new();
    let systems: Vec<SystemId> =
        rated.iter().map(|r| r.system_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();

    let mut means = Vec::new();
    let mut per_dimension_samples: BTreeMap<Dimension, Vec<Vec<f64>>> = BTreeMap::new();
    for (si, system) in systems.iter().enumerate() {
        let sys_records: Vec<&RatingRecord> = rated.iter().copied().filter(|r| &r.system_id == system).collect();
        for dimension in Dimension::ALL {
            let (items, dont_know, dropped_items) = item_means(&sys_records, dimension);
            let values: Vec<f64> = items.iter().map(|(_, m)| *m).collect();
            let cell_seed = options.seed.wrapping_add((si * Dimension::ALL.len() + dimension.position()) as u64);
            match bootstrap_mean_ci(&values, options.resamples, cell_seed) {
                Ok(ci) => means.push(SystemDimensionCi {
                    system_id: system.clone(),
                    dimension,
                    items: values.len(),
                    mean: ci.mean,
                    lo: ci.lo,
                    hi: ci.hi,
                    dont_know,
                    dropped_items,
                }),
                Err(e) => warnings.push(format!("{system}/{dimension}: {e}")),
            }
            per_dimension_samples.entry(dimension).or_default().push(values);
        }
    }

    let mut significance = Vec::new();
    if systems.len() >= 2 {
        for (dimension, samples) in &per_dimension_samples {
            match welch_matrix(samples) {
                Ok((cells, w)) => {
                    warnings.extend(w.into_iter().map(|w| format!("{dimension}: {w}")));
                    significance.push(SignificanceTable { dimension: *dimension, systems: systems.clone(), cells });
                }
                Err(e) => warnings.push(format!("significance {dimension}: {e}")),
            }
        }
    }

    let all_rated: Vec<RatingRecord> = rated.iter().map(|r| (*r).clone()).collect();
    let mut agreement = Vec::new();
    let mut issue_agreement = Vec::new();
    for dimension in Dimension::ALL {
        let matrix = RatingMatrix::likert(&all_rated, dimension);
        if matrix.items.is_empty() {
            continue;
        }
        let alpha = krippendorff_alpha(&matrix, options.likert_metric).ok();
        agreement.push(AgreementRow {
            dimension,
            metric: options.likert_metric,
            alpha: alpha.as_ref().and_then(|a| a.alpha),
            observed_disagreement: alpha.as_ref().map(|a| a.observed_disagreement),
            expected_disagreement: alpha.as_ref().map(|a| a.expected_disagreement),
            mean_pairwise_distance: mean_pairwise_distance(&matrix).ok(),
            items: matrix.items.len(),
            dont_know: matrix.dont_know,
        });
        for tag in dimension.issues() {
            let m = RatingMatrix::issue_selection(&all_rated, dimension, tag.id);
            issue_agreement.push(IssueAgreementRow {
                dimension,
                issue: tag.id.to_string(),
                metric: options.issue_metric,
                alpha: krippendorff_alpha(&m, options.issue_metric).ok().and_then(|a| a.alpha),
                pairwise_agreement: pairwise_agreement(&m),
            });
        }
    }

    let detection = if options.seeded.is_empty() {
        None
    } else {
        match detection_rates(&options.seeded, records) {
            Ok(d) => Some(d),
            Err(e) => {
                warnings.push(format!("detection rates: {e}"));
                None
            }
        }
    };

    let ais_summary = ais_summary(ais, &rated, &mut warnings);
    let mut sources: Vec<SourceRef> = records
        .iter()
        .map(|r| SourceRef {
            study_id: r.study_id.clone(),
            answer_id: r.answer_id.clone(),
            rater_id: r.rater_id.clone(),
            assignment_id: None,
            event_seqs: Vec::new(),
        })
        .collect();
    sources.extend(ais.iter().map(|a| SourceRef {
        study_id: a.study_id.clone(),
        answer_id: a.answer_id.clone(),
        rater_id: a.rater_id.clone(),
        assignment_id: None,
        event_seqs: Vec::new(),
    }));

    Ok(StudyReport {
        seed: options.seed,
        resamples: options.resamples,
        systems,
        records: records.len(),
        screened_out: records.len() - rated.len(),
        means,
        significance,
        agreement,
        issue_agreement,
        issue_frequencies: issue_frequencies(&all_rated),
        ais: ais_summary,
        detection,
        timing: timing_summary(records, options.exclude_timing_outliers),
        sources,
        warnings,
    })
}

/// Replays a service event log and reports on the given studies (all
/// studies when empty). Sources carry the event sequence numbers behind each
/// record.
pub fn build_report_from_events(
    events: &[Event],
    studies: &[StudyId],
    options: &ReportOptions,
) -> Result<StudyReport, AnalysisError> {
    let state = ServiceState::replay(events).map_err(AnalysisError::InsufficientData)?;
    let selected: Vec<StudyId> = if studies.is_empty() {
        state.study_order.clone()
    } else {
        for s in studies {
            if !state.studies.contains_key(s) {
                return Err(AnalysisError::EmptyStudy(format!("unknown study `{s}`")));
            }
        }
        studies.to_vec()
    };
    let mut records = Vec::new();
    let mut ais = Vec::new();
    let mut sources = Vec::new();
    let mut seqs: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for e in events {
        let id = match &e.body {
            EventBody::AssignmentIssued { assignment_id, .. }
            | EventBody::AssignmentExpired { assignment_id }
            | EventBody::ScreeningSubmitted { assignment_id, .. }
            | EventBody::DimensionRated { assignment_id, .. }
            | EventBody::AssistanceFeedback { assignment_id, .. }
            | EventBody::AisSubmitted { assignment_id, .. } => assignment_id,
            _ => continue,
        };
        seqs.entry(id).or_default().push(e.seq);
    }
    for study in &selected {
        records.extend(state.records(study));
        ais.extend(state.ais_records(study));
        for id in &state.studies[study].assignment_ids {
            let a = &state.assignments[id];
            let finished = a.completed_at.is_some();
            if finished {
                sources.push(SourceRef {
                    study_id: study.clone(),
                    answer_id: a.answer_id.clone(),
                    rater_id: a.rater_id.clone(),
                    assignment_id: Some(id.clone()),
                    event_seqs: seqs.get(id.as_str()).cloned().unwrap_or_default(),
                });
            }
        }
    }
    let mut report = build_report(&records, &ais, options)?;
    report.sources = sources;
    Ok(report)
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.decimals$}"))
}

/// Plain-text tables: system × dimension means with bracketed intervals,
/// per-dimension significance matrices, agreement, issue frequencies,
/// attribution, detection and timing.
pub fn render_text(report: &StudyReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Study report: {} records ({} screened out), seed {}, {} resamples",
        report.records, report.screened_out, report.seed, report.resamples
    );
    let width = report.systems.iter().map(|s| s.as_str().len()).max().unwrap_or(6).max(6);

    for family in [Family::Presentational, Family::Epistemological] {
        let dims: Vec<Dimension> = Dimension::ALL.into_iter().filter(|d| d.family() == family).collect();
        let _ = writeln!(out, "\nMean rating [95% CI], {family:?} dimensions");
        let _ = write!(out, "{:width$}", "system");
        for d in &dims {
            let _ = write!(out, "  {:<20}", d.id());
        }
        out.push('\n');
        for system in &report.systems {
            let _ = write!(out, "{:width$}", system.as_str());
            for d in &dims {
                let cell = report
                    .ci(system, *d)
                    .map_or_else(|| "n/a".to_string(), |c| format!("{:.2} [{:.2}, {:.2}]", c.mean, c.lo, c.hi));
                let _ = write!(out, "  {cell:<20}");
            }
            out.push('\n');
        }
    }

    for table in &report.significance {
        let _ = writeln!(out, "\nPairwise t-tests: {}", table.dimension.id());
        let _ = write!(out, "{:width$}", "");
        for s in &table.systems {
            let _ = write!(out, "  {:>width$}", s.as_str());
        }
        out.push('\n');
        for (i, s) in table.systems.iter().enumerate() {
            let _ = write!(out, "{:width$}", s.as_str());
            for cell in &table.cells[i] {
                let glyph = cell.as_ref().map_or("", |c| c.symbol.glyph());
                let _ = write!(out, "  {glyph:>width$}");
            }
            out.push('\n');
        }
    }

    if !report.agreement.is_empty() {
        let _ = writeln!(out, "\nAgreement per dimension");
        let _ = writeln!(out, "{:<14}  {:>8}  {:>8}  {:>6}  {:>9}", "dimension", "alpha", "distance", "items", "dont_know");
        for row in &report.agreement {
            let _ = writeln!(
                out,
                "{:<14}  {:>8}  {:>8}  {:>6}  {:>9}",
                row.dimension.id(),
                fmt_opt(row.alpha, 3),
                fmt_opt(row.mean_pairwise_distance, 3),
                row.items,
                row.dont_know
            );
        }
    }

    let selected: Vec<&IssueFrequency> = report.issue_frequencies.iter().filter(|f| f.events > 0).collect();
    if !selected.is_empty() {
        let _ = writeln!(out, "\nIssue frequencies (% of rating events)");
        let issues: Vec<(Dimension, &str)> = report
            .issue_frequencies
            .iter()
            .map(|f| (f.dimension, f.issue.as_str()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let _ = write!(out, "{:<44}", "issue");
        for s in &report.systems {
            let _ = write!(out, "  {:>width$}", s.as_str());
        }
        out.push('\n');
        for (dimension, issue) in issues {
            let _ = write!(out, "{:<44}", format!("{}/{}", dimension.id(), issue));
            for s in &report.systems {
                let v = report
                    .issue_frequencies
                    .iter()
                    .find(|f| &f.system_id == s && f.dimension == dimension && f.issue == issue)
                    .map(|f| f.percent);
                let _ = write!(out, "  {:>width$}", fmt_opt(v, 2));
            }
            out.push('\n');
        }
    }

    if let Some(ais) = &report.ais {
        let _ = writeln!(out, "\nAttribution ({} submissions, {} keypoints)", ais.submissions, ais.keypoints);
        for (k, v) in &ais.keypoint_percent {
            let _ = writeln!(out, "  keypoint {:<14} {v:>6.2}%", format!("{k:?}").to_lowercase());
        }
        for (k, v) in &ais.answer_percent {
            let _ = writeln!(out, "  answer   {:<14} {v:>6.2}%", format!("{k:?}").to_lowercase());
        }
        for c in &ais.correlations {
            let _ = writeln!(
                out,
                "  spearman vs {:<12} rho {:>6.3}  p {:.4}  n {}",
                c.dimension.id(),
                c.correlation.rho,
                c.correlation.p_value,
                c.correlation.n
            );
        }
    }

    if let Some(d) = &report.detection {
        let _ = writeln!(out, "\nDetection rates over {} seeded items", d.items);
        let _ = writeln!(out, "  any      {:>6.2}%", d.any);
        let _ = writeln!(out, "  majority {:>6.2}%", d.majority);
        let _ = writeln!(out, "  all      {:>6.2}%", d.all);
    }

    let _ = writeln!(
        out,
        "\nTiming (seconds, outliers above {:.0}s {})",
        report.timing.outlier_threshold_s,
        if report.timing.outliers_excluded { "excluded" } else { "included" }
    );
    for (phase, s) in &report.timing.per_phase {
        let _ = writeln!(
            out,
            "  {:<16} mean {:>7.2}  median {:>7.2}  n {:>4}  outliers {}",
            format!("{phase:?}").to_lowercase(),
            s.mean_s,
            s.median_s,
            s.count,
            s.outliers
        );
    }

    if !report.warnings.is_empty() {
        let _ = writeln!(out, "\nWarnings");
        for w in &report.warnings {
            let _ = writeln!(out, "  {w}");
        }
    }
    out
}
