//! Answer generation and the auxiliary stages that prepare each answer for
//! rating: keypoints, evidence retrieval, passage ranking, per-dimension
//! assistance and optional automatic rating.

mod parse;
mod run;

pub use parse::find_verbatim;
pub use run::{
    answer_id_for, read_manifest, run_study_pipeline, write_manifest, AnswerBundle, ArticleInfo, BundleStatus,
    EvidenceRecord, PipelineConfig, RankedPassage, StageStatus, StageStatuses, SystemSpec,
};

use crate::domain::{AnswerId, Dimension};
use crate::evidence::{Paragraph, WikiPattern};
use crate::llm::{prompt::ids, template, Gateway, GatewayError, GenerationRequest, PromptError};
use parse::{clean_candidate, is_sentinel, parse_passage_score, parse_rater_sample, ScoreParse};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub const NO_KEYPOINTS: &str = "No Keypoints";
pub const NO_URL: &str = "No URL";
pub const NO_CRITIQUE: &str = "No Critique";
pub const MAX_KEYPOINTS: usize = 3;
pub const TOP_PASSAGES: usize = 3;
pub const RATER_TEMPERATURE: f64 = 0.6;
pub const RATER_SAMPLES: u32 = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("input must not be empty: {0}")]
    EmptyInput(&'static str),
    #[error("no keypoint line matched the answer verbatim")]
    AllLinesRejected,
    #[error("rater sample {index} could not be parsed: {text:?}")]
    UnparseableSample { index: u32, text: String },
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Gateway(e) => e.code(),
            PipelineError::Prompt(_) => "prompt_error",
            PipelineError::EmptyInput(_) => "empty_input",
            PipelineError::AllLinesRejected => "all_lines_rejected",
            PipelineError::UnparseableSample { .. } => "unparseable_sample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerVariant {
    #[default]
    Basic,
    DimensionAware,
}

impl AnswerVariant {
    pub fn prompt_id(self) -> &'static str {
        match self {
            AnswerVariant::Basic => ids::ANSWER_BASIC,
            AnswerVariant::DimensionAware => ids::ANSWER_DIMENSION_AWARE,
        }
    }
}

impl std::str::FromStr for AnswerVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "basic" => Ok(AnswerVariant::Basic),
            "dimension_aware" => Ok(AnswerVariant::DimensionAware),
            other => Err(format!("unknown answer variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Answer,
    Keypoints,
    Url,
    Fetch,
    Ranking,
    Assistance,
    AutoRate,
}

/// A non-fatal problem recorded alongside the data it concerns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub stage: Stage,
    pub code: String,
    pub detail: String,
}

impl Warning {
    pub fn new(stage: Stage, code: &str, detail: impl Into<String>) -> Self {
        Warning { stage, code: code.to_string(), detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedAnswer {
    pub text: String,
    pub provider_id: String,
    pub variant: AnswerVariant,
    pub prompt_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keypoint {
    pub answer_id: AnswerId,
    /// 1-based position.
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeypointExtraction {
    pub keypoints: Vec<Keypoint>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UrlOutcome {
    Valid,
    NoUrl,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlProposal {
    pub url: Option<String>,
    pub outcome: UrlOutcome,
    pub raw: String,
}

/// Percentage of proposals that produced a usable article URL.
pub fn url_validity_rate(outcomes: &[UrlOutcome]) -> Option<f64> {
    if outcomes.is_empty() {
        return None;
    }
    let valid = outcomes.iter().filter(|o| **o == UrlOutcome::Valid).count();
    Some(100.0 * valid as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredParagraph {
    pub paragraph: Paragraph,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidenceSet {
    pub keypoint_index: usize,
    pub ranked: Vec<ScoredParagraph>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Critique {
    NoCritique,
    Text(String),
}

impl Critique {
    pub fn text(&self) -> Option<&str> {
        match self {
            Critique::NoCritique => None,
            Critique::Text(t) => Some(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assistance {
    pub answer_id: AnswerId,
    pub dimension: Dimension,
    pub critique: Critique,
    pub grounded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterSample {
    pub rating: u8,
    pub problem: String,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoRating {
    pub answer_id: AnswerId,
    pub dimension: Dimension,
    pub samples: Vec<RaterSample>,
    pub raw_texts: Vec<String>,
}

impl AutoRating {
    pub fn mean(&self) -> f64 {
        self.samples.iter().map(|s| s.rating as f64).sum::<f64>() / self.samples.len() as f64
    }
}

/// Distinct paragraphs across evidence sets, in first-seen order.
pub fn evidence_union<'a>(sets: impl IntoIterator<Item = &'a EvidenceSet>) -> Vec<&'a Paragraph> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for set in sets {
        for sp in &set.ranked {
            if seen.insert((sp.paragraph.article.url.as_str(), sp.paragraph.index)) {
                out.push(&sp.paragraph);
            }
        }
    }
    out
}

/// Renders the evidence block appended to epistemological assistance prompts.
pub fn render_evidence(paragraphs: &[&str]) -> String {
    if paragraphs.is_empty() {
        return String::new();
    }
    let mut out = String::from("\nParagraphs:");
    for (i, p) in paragraphs.iter().enumerate() {
        out.push_str(&format!("\n[{}] {}", i + 1, p));
    }
    out
}

const ANSWER_TOKENS: u32 = 512;
const KEYPOINT_TOKENS: u32 = 512;
const URL_TOKENS: u32 = 64;
const SCORE_TOKENS: u32 = 16;
const ASSISTANCE_TOKENS: u32 = 256;
const RATER_TOKENS: u32 = 256;

/// The individual stages, bound to a gateway and the provider that performs
/// the auxiliary (non-answer) calls.
pub struct Pipeline<'a> {
    gateway: &'a Gateway,
    aux_provider: String,
    pattern: WikiPattern,
}

impl<'a> Pipeline<'a> {
    pub fn new(gateway: &'a Gateway, aux_provider: impl Into<String>) -> Self {
        Pipeline { gateway, aux_provider: aux_provider.into(), pattern: WikiPattern::default() }
    }

    pub fn with_pattern(mut self, pattern: WikiPattern) -> Self {
        self.pattern = pattern;
        self
    }

    pub fn pattern(&self) -> &WikiPattern {
        &self.pattern
    }

    fn request(&self, template_id: &str, slots: &[(&str, &str)]) -> Result<GenerationRequest, PipelineError> {
        let slots: BTreeMap<&str, &str> = slots.iter().copied().collect();
        let prompt = template(template_id)?.render(&slots)?;
        Ok(GenerationRequest::new(self.aux_provider.clone(), prompt))
    }

    pub fn generate_answer(
        &self,
        provider_id: &str,
        question: &str,
        variant: AnswerVariant,
        temperature: f64,
    ) -> Result<GeneratedAnswer, PipelineError> {
        if question.trim().is_empty() {
            return Err(PipelineError::EmptyInput("question"));
        }
        let prompt_id = variant.prompt_id();
        let slots = BTreeMap::from([("question", question)]);
        let prompt = template(prompt_id)?.render(&slots)?;
        let request = GenerationRequest::new(provider_id, prompt)
            .temperature(temperature)
            .max_tokens(ANSWER_TOKENS);
        let text = self.gateway.complete_sample(&request, 0)?.trim().to_string();
        Ok(GeneratedAnswer {
            text,
            provider_id: provider_id.to_string(),
            variant,
            prompt_id: prompt_id.to_string(),
        })
    }

    pub fn extract_keypoints(
        &self,
        answer_id: &AnswerId,
        question: &str,
        answer: &str,
    ) -> Result<KeypointExtraction, PipelineError> {
        if answer.trim().is_empty() {
            return Err(PipelineError::EmptyInput("answer"));
        }
        let request = self
            .request(ids::EXTRACT_KEYPOINTS, &[("question", question), ("answer", answer)])?
            .max_tokens(KEYPOINT_TOKENS);

        let mut warnings = Vec::new();
        let mut fallback: Option<Vec<String>> = None;
        for sample in 0..2u32 {
            let completion = self.gateway.complete_sample(&request, sample)?;
            if is_sentinel(&completion, NO_KEYPOINTS) {
                return Ok(KeypointExtraction { keypoints: Vec::new(), warnings });
            }
            let candidates: Vec<String> = completion
                .lines()
                .map(clean_candidate)
                .filter(|l| !l.is_empty())
                .collect();
            if candidates.len() > MAX_KEYPOINTS {
                warnings.push(Warning::new(
                    Stage::Keypoints,
                    "too_many_keypoints",
                    format!("{} candidate lines, keeping the first {MAX_KEYPOINTS}", candidates.len()),
                ));
            }
            let mut accepted = Vec::new();
            let mut rejected = Vec::new();
            for candidate in candidates.into_iter().take(MAX_KEYPOINTS) {
                match find_verbatim(answer, &candidate) {
                    Some(original) => accepted.push(original.to_string()),
                    None => rejected.push(candidate),
                }
            }
            if rejected.is_empty() && !accepted.is_empty() {
                return Ok(Self::keypoints(answer_id, accepted, warnings));
            }
            for line in &rejected {
                warnings.push(Warning::new(Stage::Keypoints, "not_verbatim", line.clone()));
            }
            if sample == 1 {
                let chosen = if accepted.is_empty() { fallback.take().unwrap_or_default() } else { accepted };
                if chosen.is_empty() {
                    return Err(PipelineError::AllLinesRejected);
                }
                return Ok(Self::keypoints(answer_id, chosen, warnings));
            }
            fallback = Some(accepted);
        }
        unreachable!("loop returns on the second sample")
    }

    fn keypoints(answer_id: &AnswerId, texts: Vec<String>, warnings: Vec<Warning>) -> KeypointExtraction {
        let keypoints = texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| Keypoint { answer_id: answer_id.clone(), index: i + 1, text })
            .collect();
        KeypointExtraction { keypoints, warnings }
    }

    pub fn propose_evidence_url(&self, question: &str, answer: &str) -> Result<UrlProposal, PipelineError> {
        let request = self
            .request(ids::OBTAIN_URL, &[("question", question), ("answer", answer)])?
            .max_tokens(URL_TOKENS);
        let raw = self.gateway.complete_sample(&request, 0)?;
        if is_sentinel(&raw, NO_URL) {
            return Ok(UrlProposal { url: None, outcome: UrlOutcome::NoUrl, raw });
        }
        let candidate = raw.trim().trim_matches(|c| matches!(c, '<' | '>' | '"' | '\''));
        let proposal = match self.pattern.check(candidate) {
            Ok(url) if !candidate.contains(char::is_whitespace) => {
                UrlProposal { url: Some(url.to_string()), outcome: UrlOutcome::Valid, raw }
            }
            _ => UrlProposal { url: None, outcome: UrlOutcome::Invalid, raw },
        };
        Ok(proposal)
    }

    /// Scores every paragraph against the keypoint with one request each and
    /// keeps the best three (ties go to the earlier paragraph).
    pub fn rank_passages(
        &self,
        keypoint_index: usize,
        keypoint: &str,
        paragraphs: &[Paragraph],
    ) -> Result<EvidenceSet, PipelineError> {
        let mut warnings = Vec::new();
        let mut scored = Vec::with_capacity(paragraphs.len());
        for paragraph in paragraphs {
            let request = self
                .request(ids::RATE_PASSAGES, &[("keypoint", keypoint), ("par", &paragraph.text)])?
                .max_tokens(SCORE_TOKENS);
            let completion = self.gateway.complete_sample(&request, 0)?;
            let score = match parse_passage_score(&completion) {
                ScoreParse::Score(s) => s,
                ScoreParse::Unparsed => {
                    warnings.push(Warning::new(
                        Stage::Ranking,
                        "non_numeric_score",
                        format!("keypoint {keypoint_index}, paragraph {}: {:?}", paragraph.index, completion.trim()),
                    ));
                    0
                }
            };
            scored.push(ScoredParagraph { paragraph: paragraph.clone(), score });
        }
        scored.sort_by(|a, b| b.score.cmp(&a.score).then(a.paragraph.index.cmp(&b.paragraph.index)));
        scored.truncate(TOP_PASSAGES);
        Ok(EvidenceSet { keypoint_index, ranked: scored, warnings })
    }

    /// Generates the critique for one dimension. Evidence is only used for
    /// epistemological dimensions.
    pub fn generate_assistance(
        &self,
        answer_id: &AnswerId,
        dimension: Dimension,
        question: &str,
        answer: &str,
        evidence: &[&str],
    ) -> Result<Assistance, PipelineError> {
        let statement = dimension.assistance_statement();
        let base = [("question", question), ("answer", answer), ("statement", statement)];
        let (request, grounded) = if dimension.is_epistemological() {
            let block = render_evidence(evidence);
            let mut slots = base.to_vec();
            slots.push(("evidence", &block));
            (self.request(ids::ASSISTANCE_EPISTEMOLOGICAL, &slots)?, !evidence.is_empty())
        } else {
            (self.request(ids::ASSISTANCE_PRESENTATIONAL, &base)?, false)
        };
        let completion = self.gateway.complete_sample(&request.max_tokens(ASSISTANCE_TOKENS), 0)?;
        let critique = if is_sentinel(&completion, NO_CRITIQUE) {
            Critique::NoCritique
        } else {
            Critique::Text(completion.trim().to_string())
        };
        Ok(Assistance { answer_id: answer_id.clone(), dimension, critique, grounded })
    }

    /// Samples the LLM rater three times at temperature 0.6. A sample that
    /// does not parse is re-drawn once under a fresh sample index.
    pub fn auto_rate(
        &self,
        answer_id: &AnswerId,
        dimension: Dimension,
        question: &str,
        answer: &str,
        assistance: Option<&Critique>,
    ) -> Result<AutoRating, PipelineError> {
        let statement = dimension.rater_statement();
        let request = match assistance.and_then(Critique::text) {
            Some(critique) => self.request(
                ids::LLM_RATER,
                &[("question", question), ("answer", answer), ("critique", critique), ("statement", statement)],
            )?,
            None => self.request(
                ids::LLM_RATER_NO_CRITIQUE,
                &[("question", question), ("answer", answer), ("statement", statement)],
            )?,
        }
        .temperature(RATER_TEMPERATURE)
        .samples(RATER_SAMPLES)
        .max_tokens(RATER_TOKENS);

        let mut samples = Vec::new();
        let mut raw_texts = Vec::new();
        for index in 0..RATER_SAMPLES {
            let first = self.gateway.complete_sample(&request, index)?;
            let (text, parsed) = match parse_rater_sample(&first) {
                Some(p) => (first, p),
                None => {
                    let retry = self.gateway.complete_sample(&request, index + RATER_SAMPLES)?;
                    match parse_rater_sample(&retry) {
                        Some(p) => (retry, p),
                        None => return Err(PipelineError::UnparseableSample { index, text: retry }),
                    }
                }
            };
            let (rating, problem, explanation) = parsed;
            samples.push(RaterSample { rating, problem, explanation });
            raw_texts.push(text);
        }
        Ok(AutoRating { answer_id: answer_id.clone(), dimension, samples, raw_texts })
    }
}

#[cfg(test)]
mod tests;
