use super::Topic;
use crate::llm::{Gateway, GenerationRequest, RenderedPrompt};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierId {
    ClimateRelated,
    ContextDependent,
    Specific,
    Topic,
    Causal,
}

impl ClassifierId {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierId::ClimateRelated => "climate_related",
            ClassifierId::ContextDependent => "context_dependent",
            ClassifierId::Specific => "specific",
            ClassifierId::Topic => "topic",
            ClassifierId::Causal => "causal",
        }
    }

    /// Yes/No instruction used when the classifier is backed by a prompted model.
    pub fn instruction(self) -> &'static str {
        match self {
            ClassifierId::ClimateRelated => "Write Yes if the following query is related to climate change, write No otherwise.",
            ClassifierId::ContextDependent => "Write Yes if the query is taken out of context, write No otherwise.",
            ClassifierId::Specific => "Write Yes if the following query is asking about a specific subject, write No otherwise",
            ClassifierId::Topic => "Classify the topic of the following query.",
            ClassifierId::Causal => "Write Yes if the following query is asking about causes or effects of something, or is asking about predictions about the future. write No otherwise",
        }
    }
}

/// Which classifier verdict keeps a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepOn {
    Pass,
    Fail,
}

/// A yes/no question classifier returning the verdict and a confidence in [0, 1].
pub trait BinaryClassifier: Send + Sync {
    fn id(&self) -> ClassifierId;
    fn classify(&self, text: &str) -> Result<(bool, f64), String>;
}

pub trait TopicClassifier: Send + Sync {
    fn topic(&self, text: &str) -> Result<Topic, String>;
}

/// Deterministic stub: positive iff any keyword occurs (case-insensitive).
#[derive(Debug, Clone)]
pub struct KeywordClassifier {
    id: ClassifierId,
    keywords: Vec<String>,
}

impl KeywordClassifier {
    pub fn new<I, S>(id: ClassifierId, keywords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        KeywordClassifier { id, keywords: keywords.into_iter().map(|k| k.as_ref().to_lowercase()).collect() }
    }

    pub fn climate_default() -> Self {
        Self::new(
            ClassifierId::ClimateRelated,
            [
                "climate", "warming", "greenhouse", "carbon", "co2", "emission", "methane", "temperature",
                "sea level", "fossil", "renewable", "ipcc", "weather", "drought", "glacier", "ice",
            ],
        )
    }

    pub fn context_default() -> Self {
        Self::new(
            ClassifierId::ContextDependent,
            ["the study", "the article", "the paragraph", "the passage", "the report", "the text", "mentioned above", "discussed in"],
        )
    }

    pub fn specific_default() -> Self {
        Self::new(ClassifierId::Specific, ["reactor number", "on 4 ", "what was the reason for", "which year did"])
    }

    pub fn causal_default() -> Self {
        Self::new(
            ClassifierId::Causal,
            ["cause", "effect", "impact", "lead to", "result in", "why ", "will ", "future", "predict", "affect"],
        )
    }
}

impl BinaryClassifier for KeywordClassifier {
    fn id(&self) -> ClassifierId {
        self.id
    }

    fn classify(&self, text: &str) -> Result<(bool, f64), String> {
        let lower = text.to_lowercase();
        let hit = self.keywords.iter().any(|k| lower.contains(k.as_str()));
        Ok((hit, if hit { 1.0 } else { 0.0 }))
    }
}

/// Deterministic topic stub: the first topic with a matching keyword wins.
#[derive(Debug, Clone)]
pub struct KeywordTopicClassifier {
    rules: Vec<(Topic, Vec<String>)>,
}

impl KeywordTopicClassifier {
    pub fn new(rules: Vec<(Topic, Vec<&str>)>) -> Self {
        KeywordTopicClassifier {
            rules: rules
                .into_iter()
                .map(|(t, ks)| (t, ks.into_iter().map(str::to_lowercase).collect()))
                .collect(),
        }
    }
}

impl Default for KeywordTopicClassifier {
    fn default() -> Self {
        KeywordTopicClassifier::new(vec![
            (Topic::Energy, vec!["energy", "solar", "wind power", "nuclear", "electricity", "fossil fuel"]),
            (Topic::EmissionsPollutants, vec!["emission", "pollut", "co2", "methane", "aerosol"]),
            (Topic::PoliciesMitigationAdaptation, vec!["policy", "policies", "mitigat", "adapt", "agreement", "tax"]),
            (Topic::WeatherTemperature, vec!["weather", "temperature", "heat", "storm", "rain", "hurricane"]),
            (Topic::LandOceanFoodWater, vec!["ocean", "sea", "land", "food", "water", "crop", "soil"]),
            (Topic::SocietyLivelihoodsEconomy, vec!["econom", "society", "livelihood", "job", "poverty", "migration"]),
            (Topic::HealthNutrition, vec!["health", "disease", "nutrition", "malaria", "mortality"]),
            (Topic::Biodiversity, vec!["biodiversity", "species", "extinction", "ecosystem", "coral"]),
            (Topic::CitiesSettlementsInfra, vec!["city", "cities", "urban", "settlement", "infrastructure", "building"]),
        ])
    }
}

impl TopicClassifier for KeywordTopicClassifier {
    fn topic(&self, text: &str) -> Result<Topic, String> {
        let lower = text.to_lowercase();
        self.rules
            .iter()
            .find(|(_, ks)| ks.iter().any(|k| lower.contains(k.as_str())))
            .map(|(t, _)| *t)
            .ok_or_else(|| "no topic keyword matched".to_string())
    }
}

/// Classifier backed by a prompted model answering Yes or No.
pub struct PromptClassifier<'a> {
    id: ClassifierId,
    gateway: &'a Gateway,
    provider_id: String,
}

impl<'a> PromptClassifier<'a> {
    pub fn new(id: ClassifierId, gateway: &'a Gateway, provider_id: impl Into<String>) -> Self {
        PromptClassifier { id, gateway, provider_id: provider_id.into() }
    }

    fn ask(&self, user: String) -> Result<String, String> {
        let prompt = RenderedPrompt { template_id: format!("classify_{}", self.id.name()), system: None, user };
        let request = GenerationRequest::new(self.provider_id.clone(), prompt).max_tokens(8);
        self.gateway.complete_sample(&request, 0).map_err(|e| e.to_string())
    }
}

impl BinaryClassifier for PromptClassifier<'_> {
    fn id(&self) -> ClassifierId {
        self.id
    }

    fn classify(&self, text: &str) -> Result<(bool, f64), String> {
        let reply = self.ask(format!("{}\nQuery: {text}", self.id.instruction()))?;
        let first = reply
            .split_whitespace()
            .next()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_ascii_lowercase());
        match first.as_deref() {
            Some("yes") => Ok((true, 1.0)),
            Some("no") => Ok((false, 1.0)),
            _ => Err(format!("expected Yes or No, got {:?}", reply.trim())),
        }
    }
}

impl TopicClassifier for PromptClassifier<'_> {
    fn topic(&self, text: &str) -> Result<Topic, String> {
        let labels: Vec<&str> = Topic::ALL.iter().map(|t| t.label()).collect();
        let reply = self.ask(format!(
            "Classify the topic of the following query. Answer with exactly one of: {}.\nQuery: {text}",
            labels.join(", ")
        ))?;
        reply.trim().trim_end_matches('.').parse()
    }
}
