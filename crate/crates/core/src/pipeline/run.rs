use super::{
    evidence_union, AnswerVariant, Assistance, Critique, EvidenceSet, Keypoint, Pipeline, Stage,
    UrlOutcome, Warning,
};
use crate::domain::{AnswerId, Dimension, Question, QuestionId, SystemId};
use crate::evidence::{article_paragraphs, ArticleSource, WikiPattern};
use crate::llm::Gateway;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub id: SystemId,
    pub provider_id: String,
    #[serde(default)]
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Provider used for keypoints, URLs, passage scores and assistance.
    pub aux_provider: String,
    pub variant: AnswerVariant,
    pub assistance: bool,
    /// Number of bundles processed concurrently.
    pub width: usize,
    pub min_paragraph_chars: usize,
    pub wiki: WikiPattern,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            aux_provider: "default".into(),
            variant: AnswerVariant::Basic,
            assistance: true,
            width: 4,
            min_paragraph_chars: 0,
            wiki: WikiPattern::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStatuses {
    pub answer: StageStatus,
    pub keypoints: StageStatus,
    pub url: StageStatus,
    pub fetch: StageStatus,
    pub ranking: StageStatus,
    pub assistance: StageStatus,
}

impl StageStatuses {
    fn all(status: StageStatus) -> Self {
        StageStatuses {
            answer: status,
            keypoints: status,
            url: status,
            fetch: status,
            ranking: status,
            assistance: status,
        }
    }

    fn iter(&self) -> impl Iterator<Item = StageStatus> {
        [self.answer, self.keypoints, self.url, self.fetch, self.ranking, self.assistance].into_iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleStatus {
    Complete,
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleInfo {
    pub url: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedPassage {
    pub paragraph_index: usize,
    pub score: u8,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub keypoint_index: usize,
    pub passages: Vec<RankedPassage>,
}

impl From<&EvidenceSet> for EvidenceRecord {
    fn from(set: &EvidenceSet) -> Self {
        EvidenceRecord {
            keypoint_index: set.keypoint_index,
            passages: set
                .ranked
                .iter()
                .map(|sp| RankedPassage {
                    paragraph_index: sp.paragraph.index,
                    score: sp.score,
                    text: sp.paragraph.text.clone(),
                })
                .collect(),
        }
    }
}

/// One manifest line: everything prepared for rating a single answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerBundle {
    pub question_id: QuestionId,
    pub question: String,
    pub system_id: SystemId,
    pub answer_id: AnswerId,
    pub answer: Option<String>,
    pub answer_provider: String,
    pub variant: AnswerVariant,
    pub prompt_id: String,
    pub keypoints: Vec<Keypoint>,
    pub url: Option<String>,
    pub url_outcome: Option<UrlOutcome>,
    pub article: Option<ArticleInfo>,
    pub evidence: Vec<EvidenceRecord>,
    pub assistance: Vec<Assistance>,
    pub warnings: Vec<Warning>,
    pub stages: StageStatuses,
    pub status: BundleStatus,
}

impl AnswerBundle {
    /// A bundle for an answer produced outside the pipeline: only the answer
    /// stage is marked done.
    pub fn from_answer(question: &Question, system_id: &SystemId, answer: impl Into<String>) -> Self {
        let mut stages = StageStatuses::all(StageStatus::Skipped);
        stages.answer = StageStatus::Ok;
        AnswerBundle {
            question_id: question.id.clone(),
            question: question.text.clone(),
            system_id: system_id.clone(),
            answer_id: answer_id_for(&question.id, system_id),
            answer: Some(answer.into()),
            answer_provider: "external".into(),
            variant: AnswerVariant::Basic,
            prompt_id: String::new(),
            keypoints: Vec::new(),
            url: None,
            url_outcome: None,
            article: None,
            evidence: Vec::new(),
            assistance: Vec::new(),
            warnings: Vec::new(),
            stages,
            status: BundleStatus::Partial,
        }
    }

    pub fn with_assistance(mut self, dimension: Dimension, critique: Critique) -> Self {
        self.assistance.retain(|a| a.dimension != dimension);
        self.assistance.push(Assistance {
            answer_id: self.answer_id.clone(),
            dimension,
            critique,
            grounded: dimension.is_epistemological() && !self.evidence.is_empty(),
        });
        self.stages.assistance = StageStatus::Ok;
        self
    }

    /// Adds a keypoint (numbered in order) with its ranked evidence texts.
    pub fn with_keypoint(mut self, text: impl Into<String>, passages: &[&str]) -> Self {
        let index = self.keypoints.len() + 1;
        self.keypoints.push(Keypoint { answer_id: self.answer_id.clone(), index, text: text.into() });
        self.evidence.push(EvidenceRecord {
            keypoint_index: index,
            passages: passages
                .iter()
                .enumerate()
                .map(|(i, p)| RankedPassage { paragraph_index: i, score: 100, text: p.to_string() })
                .collect(),
        });
        self.stages.keypoints = StageStatus::Ok;
        self
    }

    pub fn assistance_for(&self, dimension: Dimension) -> Option<&Assistance> {
        self.assistance.iter().find(|a| a.dimension == dimension)
    }

    pub fn evidence_for(&self, keypoint_index: usize) -> Option<&EvidenceRecord> {
        self.evidence.iter().find(|e| e.keypoint_index == keypoint_index)
    }
}

pub fn answer_id_for(question: &QuestionId, system: &SystemId) -> AnswerId {
    AnswerId(format!("{question}__{system}"))
}

fn validate(gateway: &Gateway, systems: &[SystemSpec], config: &PipelineConfig) -> Result<(), String> {
    if config.width == 0 {
        return Err("width must be at least 1".into());
    }
    if !gateway.has_provider(&config.aux_provider) {
        return Err(format!("auxiliary provider `{}` is not configured", config.aux_provider));
    }
    let mut ids = BTreeSet::new();
    for system in systems {
        if !ids.insert(&system.id) {
            return Err(format!("duplicate system id `{}`", system.id));
        }
        if !gateway.has_provider(&system.provider_id) {
            return Err(format!("system `{}` uses unknown provider `{}`", system.id, system.provider_id));
        }
        if !(system.temperature >= 0.0) {
            return Err(format!("system `{}` has a negative temperature", system.id));
        }
    }
    Ok(())
}

/// Runs every (question, system) pair through all stages. Per-stage failures
/// are recorded in the bundle; only configuration problems are returned as
/// errors. Output order is question-major, then system order.
pub fn run_study_pipeline(
    gateway: &Gateway,
    articles: &dyn ArticleSource,
    questions: &[Question],
    systems: &[SystemSpec],
    config: &PipelineConfig,
) -> Result<Vec<AnswerBundle>, String> {
    validate(gateway, systems, config)?;
    let pipeline = Pipeline::new(gateway, config.aux_provider.clone()).with_pattern(config.wiki.clone());
    let jobs: Vec<(&Question, &SystemSpec)> =
        questions.iter().flat_map(|q| systems.iter().map(move |s| (q, s))).collect();
    let results: Mutex<Vec<Option<AnswerBundle>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let workers = config.width.min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((question, system)) = jobs.get(i) else { break };
                let bundle = process_bundle(&pipeline, articles, question, system, config);
                results.lock().unwrap()[i] = Some(bundle);
            });
        }
    });
    Ok(results.into_inner().unwrap().into_iter().map(|b| b.expect("every job ran")).collect())
}

fn process_bundle(
    pipeline: &Pipeline<'_>,
    articles: &dyn ArticleSource,
    question: &Question,
    system: &SystemSpec,
    config: &PipelineConfig,
) -> AnswerBundle {
    let answer_id = answer_id_for(&question.id, &system.id);
    let mut bundle = AnswerBundle {
        question_id: question.id.clone(),
        question: question.text.clone(),
        system_id: system.id.clone(),
        answer_id: answer_id.clone(),
        answer: None,
        answer_provider: system.provider_id.clone(),
        variant: config.variant,
        prompt_id: config.variant.prompt_id().to_string(),
        keypoints: Vec::new(),
        url: None,
        url_outcome: None,
        article: None,
        evidence: Vec::new(),
        assistance: Vec::new(),
        warnings: Vec::new(),
        stages: StageStatuses::all(StageStatus::Skipped),
        status: BundleStatus::Failed,
    };
    let fail = |b: &mut AnswerBundle, stage: Stage, e: &dyn std::fmt::Display, code: &str| {
        b.warnings.push(Warning::new(stage, code, e.to_string()));
    };

    let answer = match pipeline.generate_answer(&system.provider_id, &question.text, config.variant, system.temperature) {
        Ok(a) => a.text,
        Err(e) => {
            fail(&mut bundle, Stage::Answer, &e, e.code());
            bundle.stages.answer = StageStatus::Failed;
            return bundle;
        }
    };
    bundle.stages.answer = StageStatus::Ok;
    bundle.answer = Some(answer.clone());

    match pipeline.extract_keypoints(&answer_id, &question.text, &answer) {
        Ok(extraction) => {
            bundle.keypoints = extraction.keypoints;
            bundle.warnings.extend(extraction.warnings);
            bundle.stages.keypoints = StageStatus::Ok;
        }
        Err(e) => {
            fail(&mut bundle, Stage::Keypoints, &e, e.code());
            bundle.stages.keypoints = StageStatus::Failed;
        }
    }

    let mut paragraphs = Vec::new();
    match pipeline.propose_evidence_url(&question.text, &answer) {
        Ok(proposal) => {
            bundle.stages.url = StageStatus::Ok;
            bundle.url_outcome = Some(proposal.outcome);
            if proposal.outcome == UrlOutcome::Invalid {
                bundle.warnings.push(Warning::new(Stage::Url, "invalid_url", proposal.raw.trim()));
            }
            if let Some(url) = proposal.url {
                bundle.url = Some(url.clone());
                match articles.fetch_text(&url) {
                    Ok((reference, text)) => {
                        paragraphs = article_paragraphs(&reference, &text, config.min_paragraph_chars);
                        if paragraphs.is_empty() {
                            bundle.warnings.push(Warning::new(Stage::Fetch, "no_paragraphs", url.clone()));
                        }
                        bundle.article = Some(ArticleInfo { url: reference.url, title: reference.title });
                        bundle.stages.fetch = StageStatus::Ok;
                    }
                    Err(e) => {
                        fail(&mut bundle, Stage::Fetch, &e, e.code());
                        bundle.stages.fetch = StageStatus::Failed;
                    }
                }
            }
        }
        Err(e) => {
            fail(&mut bundle, Stage::Url, &e, e.code());
            bundle.stages.url = StageStatus::Failed;
        }
    }

    let mut sets = Vec::new();
    if !bundle.keypoints.is_empty() && !paragraphs.is_empty() {
        bundle.stages.ranking = StageStatus::Ok;
        for keypoint in &bundle.keypoints {
            match pipeline.rank_passages(keypoint.index, &keypoint.text, &paragraphs) {
                Ok(set) => sets.push(set),
                Err(e) => {
                    bundle.warnings.push(Warning::new(Stage::Ranking, e.code(), e.to_string()));
                    bundle.stages.ranking = StageStatus::Failed;
                }
            }
        }
        for set in &sets {
            bundle.warnings.extend(set.warnings.iter().cloned());
        }
        bundle.evidence = sets.iter().map(EvidenceRecord::from).collect();
    }

    if config.assistance {
        bundle.stages.assistance = StageStatus::Ok;
        let union: Vec<&str> = evidence_union(&sets).into_iter().map(|p| p.text.as_str()).collect();
        for dimension in Dimension::ALL {
            match pipeline.generate_assistance(&answer_id, dimension, &question.text, &answer, &union) {
                Ok(a) => bundle.assistance.push(a),
                Err(e) => {
                    bundle.warnings.push(Warning::new(
                        Stage::Assistance,
                        e.code(),
                        format!("{dimension}: {e}"),
                    ));
                    bundle.stages.assistance = StageStatus::Failed;
                }
            }
        }
    }

    bundle.status = if bundle.stages.iter().any(|s| s == StageStatus::Failed) {
        BundleStatus::Partial
    } else {
        BundleStatus::Complete
    };
    bundle
}

/// Writes bundles as newline-delimited JSON, replacing `path` atomically.
pub fn write_manifest(path: &Path, bundles: &[AnswerBundle]) -> std::io::Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut out = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        for bundle in bundles {
            serde_json::to_writer(&mut out, bundle)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
    }
    std::fs::rename(tmp, path)
}

pub fn read_manifest(path: &Path) -> std::io::Result<Vec<AnswerBundle>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut bundles = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        bundles.push(serde_json::from_str(&line)?);
    }
    Ok(bundles)
}
