//! Question corpus construction: paragraph harvesting, question generation,
//! the filter cascade, strata labelling and stratified sampling.

mod classify;
mod sample;

pub use classify::{
    BinaryClassifier, ClassifierId, KeepOn, KeywordClassifier, KeywordTopicClassifier,
    PromptClassifier, TopicClassifier,
};
pub use sample::{stratified_sample, CellCount, Sample};

use crate::domain::{Question, QuestionId};
use crate::evidence::{split_paragraphs, ArticleSource, EvidenceError};
use crate::llm::{cosine, prompt::ids, template, Gateway, GatewayError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub const HARVEST_MIN_CHARS: usize = 500;
pub const DEDUP_THRESHOLD: f64 = 0.85;

/// How an article was selected for harvesting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Referenced from the main climate change article.
    Ref,
    /// Listed in the climate change category.
    Cat,
    /// Regional "Climate change in ..." articles.
    Reg,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().trim_end_matches('.').to_ascii_lowercase().as_str() {
            "ref" => Ok(Strategy::Ref),
            "cat" => Ok(Strategy::Cat),
            "reg" => Ok(Strategy::Reg),
            other => Err(format!("unknown selection strategy `{other}`")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Ref => "ref",
            Strategy::Cat => "cat",
            Strategy::Reg => "reg",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleEntry {
    pub url: String,
    pub strategy: Option<Strategy>,
}

/// Parses an article list: one URL per line, optionally followed by a
/// strategy tag. Blank lines and `#` comments are ignored.
pub fn parse_article_list(text: &str) -> Result<Vec<ArticleEntry>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let url = parts.next().unwrap_or_default().to_string();
        let strategy = parts.next().map(Strategy::from_str).transpose().map_err(|e| format!("line {}: {e}", n + 1))?;
        if parts.next().is_some() {
            return Err(format!("line {}: expected `<url> [strategy]`", n + 1));
        }
        out.push(ArticleEntry { url, strategy });
    }
    Ok(out)
}

/// Where a synthetic question's paragraph came from (no fetch timestamps, so
/// manifests stay reproducible).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParagraphOrigin {
    pub url: String,
    pub title: String,
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestedParagraph {
    pub origin: ParagraphOrigin,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyCount {
    pub articles: usize,
    pub paragraphs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchFailure {
    pub url: String,
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Harvest {
    pub paragraphs: Vec<HarvestedParagraph>,
    /// Keyed by strategy tag, `untagged` for entries without one.
    pub per_strategy: BTreeMap<String, StrategyCount>,
    pub failures: Vec<FetchFailure>,
}

impl Harvest {
    pub fn total(&self) -> StrategyCount {
        self.per_strategy.values().fold(StrategyCount::default(), |acc, c| StrategyCount {
            articles: acc.articles + c.articles,
            paragraphs: acc.paragraphs + c.paragraphs,
        })
    }
}

/// Fetches each article and keeps its paragraphs longer than `min_chars`.
/// Fetch failures are recorded and skipped.
pub fn harvest_paragraphs(source: &dyn ArticleSource, articles: &[ArticleEntry], min_chars: usize) -> Harvest {
    let mut harvest = Harvest::default();
    for entry in articles {
        let key = entry.strategy.map(|s| s.to_string()).unwrap_or_else(|| "untagged".into());
        let (reference, text) = match source.fetch_text(&entry.url) {
            Ok(r) => r,
            Err(e) => {
                harvest.failures.push(fetch_failure(&entry.url, &e));
                continue;
            }
        };
        let blocks = split_paragraphs(&text, min_chars);
        let count = harvest.per_strategy.entry(key).or_default();
        count.articles += 1;
        count.paragraphs += blocks.len();
        for (index, text) in blocks.into_iter().enumerate() {
            harvest.paragraphs.push(HarvestedParagraph {
                origin: ParagraphOrigin {
                    url: reference.url.clone(),
                    title: reference.title.clone(),
                    index,
                    strategy: entry.strategy,
                },
                text,
            });
        }
    }
    harvest
}

fn fetch_failure(url: &str, e: &EvidenceError) -> FetchFailure {
    FetchFailure { url: url.to_string(), code: e.code().to_string(), detail: e.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionSource {
    WikipediaSynthetic,
    FileImport,
}

/// The nine topic strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Topic {
    #[serde(rename = "Energy")]
    Energy,
    #[serde(rename = "Emissions-Pollutants")]
    EmissionsPollutants,
    #[serde(rename = "Policies-Mitigation-Adaptation")]
    PoliciesMitigationAdaptation,
    #[serde(rename = "Weather-Temperature")]
    WeatherTemperature,
    #[serde(rename = "Land-Ocean-Food-Water")]
    LandOceanFoodWater,
    #[serde(rename = "Society-Livelihoods-Economy")]
    SocietyLivelihoodsEconomy,
    #[serde(rename = "Health-Nutrition")]
    HealthNutrition,
    #[serde(rename = "Biodiversity")]
    Biodiversity,
    #[serde(rename = "Cities-Settlements-Infra")]
    CitiesSettlementsInfra,
}

impl Topic {
    pub const ALL: [Topic; 9] = [
        Topic::Energy,
        Topic::EmissionsPollutants,
        Topic::PoliciesMitigationAdaptation,
        Topic::WeatherTemperature,
        Topic::LandOceanFoodWater,
        Topic::SocietyLivelihoodsEconomy,
        Topic::HealthNutrition,
        Topic::Biodiversity,
        Topic::CitiesSettlementsInfra,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Topic::Energy => "Energy",
            Topic::EmissionsPollutants => "Emissions-Pollutants",
            Topic::PoliciesMitigationAdaptation => "Policies-Mitigation-Adaptation",
            Topic::WeatherTemperature => "Weather-Temperature",
            Topic::LandOceanFoodWater => "Land-Ocean-Food-Water",
            Topic::SocietyLivelihoodsEconomy => "Society-Livelihoods-Economy",
            Topic::HealthNutrition => "Health-Nutrition",
            Topic::Biodiversity => "Biodiversity",
            Topic::CitiesSettlementsInfra => "Cities-Settlements-Infra",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Topic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Topic::ALL
            .into_iter()
            .find(|t| t.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown topic `{s}`"))
    }
}

/// One filter's verdict on a question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStep {
    pub filter: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateQuestion {
    pub id: QuestionId,
    pub text: String,
    pub source: QuestionSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_tag: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin: Option<ParagraphOrigin>,
    pub filter_trace: Vec<FilterStep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub removed_by: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topic: Option<Topic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub causal: Option<bool>,
}

impl CandidateQuestion {
    pub fn imported(id: impl Into<QuestionId>, text: impl Into<String>) -> Self {
        CandidateQuestion {
            id: id.into(),
            text: text.into(),
            source: QuestionSource::FileImport,
            source_tag: None,
            origin: None,
            filter_trace: Vec::new(),
            removed_by: None,
            topic: None,
            causal: None,
        }
    }

    pub fn to_question(&self) -> Question {
        Question {
            id: self.id.clone(),
            text: self.text.clone(),
            source: Some(self.source_tag.clone().unwrap_or_else(|| match self.source {
                QuestionSource::WikipediaSynthetic => "wikipedia_synthetic".into(),
                QuestionSource::FileImport => "file_import".into(),
            })),
            topic: self.topic.map(|t| t.label().to_string()),
            causal: self.causal,
        }
    }

    fn record(&mut self, step: FilterStep) {
        if !step.passed && self.removed_by.is_none() {
            self.removed_by = Some(step.filter.clone());
        }
        self.filter_trace.push(step);
    }
}

/// Parses an imported question file: one question per line, optionally
/// followed by a tab and a source tag. Pre-labelled `Question` JSON lines
/// (starting with `{`) are also accepted and keep their labels.
pub fn import_questions(text: &str, id_prefix: &str) -> Result<Vec<CandidateQuestion>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        if line.trim_start().starts_with('{') {
            let q: Question = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", n + 1))?;
            let mut c = CandidateQuestion::imported(q.id, q.text);
            c.source_tag = q.source;
            c.topic = q.topic.as_deref().map(Topic::from_str).transpose().map_err(|e| format!("line {}: {e}", n + 1))?;
            c.causal = q.causal;
            out.push(c);
            continue;
        }
        let (text, tag) = match line.split_once('\t') {
            Some((t, tag)) => (t.trim(), Some(tag.trim().to_string()).filter(|s| !s.is_empty())),
            None => (line.trim(), None),
        };
        let mut c = CandidateQuestion::imported(format!("{id_prefix}{:04}", out.len() + 1), text);
        c.source_tag = tag;
        out.push(c);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusWarning {
    pub code: String,
    pub detail: String,
}

impl CorpusWarning {
    fn new(code: &str, detail: impl Into<String>) -> Self {
        CorpusWarning { code: code.to_string(), detail: detail.into() }
    }
}

/// Asks the model for questions answerable from `paragraph`, one per line.
/// Lines that are empty or do not end in a question mark are dropped.
pub fn generate_questions(
    gateway: &Gateway,
    provider_id: &str,
    paragraph: &HarvestedParagraph,
    id_prefix: &str,
) -> Result<(Vec<CandidateQuestion>, Vec<CorpusWarning>), GatewayError> {
    let tpl = template(ids::GENERATE_QUESTIONS).expect("registered template");
    let prompt = tpl.render(&BTreeMap::from([("par", paragraph.text.as_str())])).expect("slots supplied");
    let request = crate::llm::GenerationRequest::new(provider_id, prompt);
    let completion = gateway.complete_sample(&request, 0)?;
    let mut questions = Vec::new();
    let mut warnings = Vec::new();
    for line in completion.lines() {
        let text = line
            .trim()
            .trim_start_matches(|c: char| c.is_ascii_digit() || matches!(c, '.' | ')' | '-' | '*' | '•'))
            .trim();
        if text.is_empty() {
            continue;
        }
        if !text.ends_with('?') {
            warnings.push(CorpusWarning::new("not_a_question", text));
            continue;
        }
        questions.push(CandidateQuestion {
            id: QuestionId(format!("{id_prefix}{:02}", questions.len() + 1)),
            text: text.to_string(),
            source: QuestionSource::WikipediaSynthetic,
            source_tag: None,
            origin: Some(paragraph.origin.clone()),
            filter_trace: Vec::new(),
            removed_by: None,
            topic: None,
            causal: None,
        });
    }
    if questions.is_empty() && !completion.trim().is_empty() && warnings.is_empty() {
        warnings.push(CorpusWarning::new("no_questions", format!("{:?}", completion.trim())));
    }
    Ok((questions, warnings))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub survivors: Vec<CandidateQuestion>,
    pub removed: Vec<CandidateQuestion>,
    pub warnings: Vec<CorpusWarning>,
    /// Questions kept only because their check failed.
    pub fail_open: usize,
}

pub const DEDUP_FILTER: &str = "duplicate";

/// Greedy near-duplicate removal in input order: a question is removed when
/// its cosine similarity to an earlier survivor exceeds `threshold`.
pub fn dedup_filter(
    gateway: &Gateway,
    provider_id: &str,
    questions: Vec<CandidateQuestion>,
    threshold: f64,
) -> FilterResult {
    let texts: Vec<String> = questions.iter().map(|q| q.text.clone()).collect();
    let vectors = match gateway.embed(provider_id, &texts) {
        Ok(v) => v,
        Err(e) => {
            let n = questions.len();
            let survivors = questions
                .into_iter()
                .map(|mut q| {
                    q.record(FilterStep {
                        filter: DEDUP_FILTER.into(),
                        passed: true,
                        score: None,
                        note: Some(format!("unfiltered: {}", e.code())),
                    });
                    q
                })
                .collect();
            return FilterResult {
                survivors,
                removed: Vec::new(),
                warnings: vec![CorpusWarning::new("embedding_failed", e.to_string())],
                fail_open: n,
            };
        }
    };
    dedup_with_vectors(questions, &vectors, threshold)
}

/// The greedy rule over precomputed vectors (one per question).
pub fn dedup_with_vectors(questions: Vec<CandidateQuestion>, vectors: &[Vec<f64>], threshold: f64) -> FilterResult {
    dedup_by_similarity(questions, |i, j| cosine(&vectors[i], &vectors[j]), threshold)
}

/// The greedy rule over an arbitrary pairwise similarity of input positions.
pub fn dedup_by_similarity(
    questions: Vec<CandidateQuestion>,
    similarity: impl Fn(usize, usize) -> f64,
    threshold: f64,
) -> FilterResult {
    let mut result = FilterResult::default();
    let mut kept: Vec<usize> = Vec::new();
    for (i, mut q) in questions.into_iter().enumerate() {
        let best = kept
            .iter()
            .map(|&j| (j, similarity(i, j)))
            .fold(None, |acc: Option<(usize, f64)>, (j, s)| match acc {
                Some((_, b)) if b >= s => acc,
                _ => Some((j, s)),
            });
        let duplicate_of = best.filter(|&(_, s)| s > threshold);
        q.record(FilterStep {
            filter: DEDUP_FILTER.into(),
            passed: duplicate_of.is_none(),
            score: best.map(|(_, s)| s),
            note: duplicate_of.map(|(j, _)| format!("duplicate of position {j}")),
        });
        if duplicate_of.is_some() {
            result.removed.push(q);
        } else {
            kept.push(i);
            result.survivors.push(q);
        }
    }
    result
}

/// Applies one binary classifier. Questions whose classification errors are
/// kept (fail-open) and counted.
pub fn classifier_filter(
    questions: Vec<CandidateQuestion>,
    classifier: &dyn BinaryClassifier,
    keep_on: KeepOn,
) -> FilterResult {
    let mut result = FilterResult::default();
    let name = classifier.id().name();
    for mut q in questions {
        match classifier.classify(&q.text) {
            Ok((positive, confidence)) => {
                let keep = positive == (keep_on == KeepOn::Pass);
                q.record(FilterStep { filter: name.into(), passed: keep, score: Some(confidence), note: None });
                if keep {
                    result.survivors.push(q);
                } else {
                    result.removed.push(q);
                }
            }
            Err(e) => {
                q.record(FilterStep {
                    filter: name.into(),
                    passed: true,
                    score: None,
                    note: Some(format!("classifier error: {e}")),
                });
                result.warnings.push(CorpusWarning::new("classifier_failed", format!("{}: {e}", q.id)));
                result.fail_open += 1;
                result.survivors.push(q);
            }
        }
    }
    result
}

/// Sets topic and causal labels on questions that lack them. A failed
/// classification leaves the label absent, which excludes the question from
/// stratified sampling.
pub fn label_strata(
    questions: &mut [CandidateQuestion],
    topic: &dyn TopicClassifier,
    causal: &dyn BinaryClassifier,
) -> Vec<CorpusWarning> {
    let mut warnings = Vec::new();
    for q in questions.iter_mut() {
        if q.topic.is_none() {
            match topic.topic(&q.text) {
                Ok(t) => q.topic = Some(t),
                Err(e) => warnings.push(CorpusWarning::new("topic_failed", format!("{}: {e}", q.id))),
            }
        }
        if q.causal.is_none() {
            match causal.classify(&q.text) {
                Ok((c, _)) => q.causal = Some(c),
                Err(e) => warnings.push(CorpusWarning::new("causal_failed", format!("{}: {e}", q.id))),
            }
        }
    }
    warnings
}

/// Classifiers and embedding provider for the full filter cascade.
pub struct Cascade<'a> {
    pub climate: Option<&'a dyn BinaryClassifier>,
    pub dedup: Option<(&'a Gateway, &'a str, f64)>,
    pub context: Option<&'a dyn BinaryClassifier>,
    pub specific: Option<&'a dyn BinaryClassifier>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CascadeOutcome {
    /// Survivors first (input order), then removed questions in removal order.
    pub survivors: Vec<CandidateQuestion>,
    pub removed: Vec<CandidateQuestion>,
    pub warnings: Vec<CorpusWarning>,
    pub removed_per_filter: BTreeMap<String, usize>,
    pub fail_open: usize,
}

impl Cascade<'_> {
    /// Climate relevance, duplicates, context dependence, then specificity.
    pub fn run(&self, questions: Vec<CandidateQuestion>) -> CascadeOutcome {
        let mut out = CascadeOutcome::default();
        let mut current = questions;
        let absorb = |out: &mut CascadeOutcome, r: FilterResult, name: &str| {
            out.removed_per_filter.insert(name.to_string(), r.removed.len());
            out.removed.extend(r.removed);
            out.warnings.extend(r.warnings);
            out.fail_open += r.fail_open;
            r.survivors
        };
        if let Some(c) = self.climate {
            let r = classifier_filter(current, c, KeepOn::Pass);
            current = absorb(&mut out, r, c.id().name());
        }
        if let Some((g, provider, threshold)) = self.dedup {
            let r = dedup_filter(g, provider, current, threshold);
            current = absorb(&mut out, r, DEDUP_FILTER);
        }
        if let Some(c) = self.context {
            let r = classifier_filter(current, c, KeepOn::Fail);
            current = absorb(&mut out, r, c.id().name());
        }
        if let Some(c) = self.specific {
            let r = classifier_filter(current, c, KeepOn::Fail);
            current = absorb(&mut out, r, c.id().name());
        }
        out.survivors = current;
        out
    }
}
