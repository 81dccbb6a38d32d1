//! Prompt templates with `[slot]` placeholders and the registry of all
//! prompts used by the pipeline, the corpus builder and the LLM rater.

use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("slot `{0}` is referenced by the template but was not supplied")]
    MissingSlot(String),
    #[error("slot `{0}` was supplied but is not referenced by the template")]
    UnknownSlot(String),
    #[error("no prompt template named `{0}`")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

fn parse_segments(text: &str) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let close = after.find(']');
        let name = close.map(|c| &after[..c]);
        match name {
            Some(n) if !n.is_empty() && n.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') => {
                literal.push_str(&rest[..open]);
                if !literal.is_empty() {
                    segments.push(Segment::Text(std::mem::take(&mut literal)));
                }
                segments.push(Segment::Slot(n.to_string()));
                rest = &after[n.len() + 1..];
            }
            _ => {
                literal.push_str(&rest[..=open]);
                rest = after;
            }
        }
    }
    literal.push_str(rest);
    if !literal.is_empty() {
        segments.push(Segment::Text(literal));
    }
    segments
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptTemplate {
    pub id: String,
    pub system_text: Option<String>,
    pub user_text: String,
}

/// A rendered prompt ready to be sent to a provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RenderedPrompt {
    pub template_id: String,
    pub system: Option<String>,
    pub user: String,
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, user_text: impl Into<String>) -> Self {
        PromptTemplate { id: id.into(), system_text: None, user_text: user_text.into() }
    }

    pub fn with_system(mut self, system: impl Into<String>) -> Self {
        self.system_text = Some(system.into());
        self
    }

    /// Slot names referenced by the user text, in order of first appearance.
    pub fn slots(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        parse_segments(&self.user_text)
            .into_iter()
            .filter_map(|s| match s {
                Segment::Slot(n) if seen.insert(n.clone()) => Some(n),
                _ => None,
            })
            .collect()
    }

    /// Substitutes every slot in a single pass; slot values are inserted
    /// literally and never re-scanned for markers.
    pub fn render_text(&self, slots: &BTreeMap<&str, &str>) -> Result<String, PromptError> {
        let segments = parse_segments(&self.user_text);
        let referenced: BTreeSet<&str> = segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(n) => Some(n.as_str()),
                Segment::Text(_) => None,
            })
            .collect();
        if let Some(unknown) = slots.keys().find(|k| !referenced.contains(*k)) {
            return Err(PromptError::UnknownSlot(unknown.to_string()));
        }
        let mut out = String::with_capacity(self.user_text.len());
        for segment in segments {
            match segment {
                Segment::Text(t) => out.push_str(&t),
                Segment::Slot(n) => match slots.get(n.as_str()) {
                    Some(v) => out.push_str(v),
                    None => return Err(PromptError::MissingSlot(n)),
                },
            }
        }
        Ok(out)
    }

    pub fn render(&self, slots: &BTreeMap<&str, &str>) -> Result<RenderedPrompt, PromptError> {
        Ok(RenderedPrompt {
            template_id: self.id.clone(),
            system: self.system_text.clone(),
            user: self.render_text(slots)?,
        })
    }
}

/// Renders `template` with `slots`; convenience wrapper over [`PromptTemplate::render_text`].
pub fn render_prompt(template: &PromptTemplate, slots: &[(&str, &str)]) -> Result<String, PromptError> {
    template.render_text(&slots.iter().copied().collect())
}

pub mod ids {
    pub const ANSWER_BASIC: &str = "answer_basic";
    pub const ANSWER_DIMENSION_AWARE: &str = "answer_dimension_aware";
    pub const OBTAIN_URL: &str = "obtain_url";
    pub const EXTRACT_KEYPOINTS: &str = "extract_keypoints";
    pub const RATE_PASSAGES: &str = "rate_passages";
    pub const ASSISTANCE_PRESENTATIONAL: &str = "assistance_presentational";
    pub const ASSISTANCE_EPISTEMOLOGICAL: &str = "assistance_epistemological";
    pub const LLM_RATER: &str = "llm_rater";
    pub const LLM_RATER_NO_CRITIQUE: &str = "llm_rater_no_critique";
    pub const GENERATE_QUESTIONS: &str = "generate_questions";
}

pub const ANSWER_INSTRUCTION: &str = "You are an expert on climate change communication. Answer each question in a 3-4 sentence paragraph.";

pub const DIMENSION_AWARE_INSTRUCTION: &str = "You are an expert on climate change communication. Answer the question in a 3-4 sentence paragraph. The answer should be concise and tailored for a general audience. It must be clear, and easy to understand. The answer should be presented in a neutral, unbiased tone without any negative connotations or attempts to persuade. The answer should be factually accurate. The answer should be specific to the question and avoid irrelevant, generic, or vague statements. The answer should comprehensively address all aspects of the question. Where scientific uncertainty exists, the answer should appropriately reflect this, conveying the range of scientific perspectives or the limitations of current knowledge.";

const OBTAIN_URL_INSTRUCTION: &str = "Please provide a Wikipedia article that supports your answer. Just state the url, do not include additional text. If there is no Wikipedia url supporting the answer just say \"No URL\".";

const EXTRACT_KEYPOINTS_INSTRUCTION: &str = "Now go through all the statements made in the answer. Mention 1 to 3 key statements that are made to answer the question. If you can not provide key statement/statements, only write No Keypoints. It is very important to copy the statements verbatim from the answer.";

const RATE_PASSAGES_TEXT: &str = "You are given a statement and a passage from Wikipedia. Rate how useful the passage is for evaluating the statement on a scale from 0 (completely irrelevant) to 100 (supports or contradicts the statement). Rate the passage high only if it supports or contradicts the statement. Just state the numbers in one line, nothing else. Statement: [keypoint] Passage: [par]";

const ASSISTANCE_PREFIX: &str = "Given the following question and answer, express your disagreement with the statement in a concise sentence in a single line. You may be provided with relevant paragraphs from Wikipedia, if so, you must use those verbatim to support your critique. If you fully agree with the statement, state \"No Critique\". Question: [question] Answer: [answer] Statement: [statement]";

const RATER_SYSTEM: &str = "You are an expert on climate communication. Given a question, and an answer to it, and maybe a succinct critique of the answer.";

const RATER_SCALE: &str = "To what extent do you agree with the following statement on the 5-point likert scale (1=disagree completely, 2=disagree, 3=neither, 4=agree, 5=agree completely)?";

const RATER_FORMAT: &str = "Answer in the format \"Rating: X Problem: Y Explanation: Z\"";

const GENERATE_QUESTIONS_TEXT: &str = "Generate as many questions as possible that can be answered using the following paragraph from Wikipedia. Only generate questions that are salient and related to climate change. Write one question per line and nothing else.\nParagraph: [par]";

/// All prompt templates, keyed by id.
pub fn registry() -> BTreeMap<String, PromptTemplate> {
    let conversation = |instruction: &str| format!("Question: [question]\nAnswer: [answer]\n\n{instruction}");
    let templates = [
        PromptTemplate::new(ids::ANSWER_BASIC, format!("{ANSWER_INSTRUCTION}\n\nQuestion: [question]")),
        PromptTemplate::new(
            ids::ANSWER_DIMENSION_AWARE,
            format!("{DIMENSION_AWARE_INSTRUCTION}\n\nQuestion: [question]"),
        ),
        PromptTemplate::new(ids::OBTAIN_URL, conversation(OBTAIN_URL_INSTRUCTION)),
        PromptTemplate::new(ids::EXTRACT_KEYPOINTS, conversation(EXTRACT_KEYPOINTS_INSTRUCTION)),
        PromptTemplate::new(ids::RATE_PASSAGES, RATE_PASSAGES_TEXT),
        PromptTemplate::new(ids::ASSISTANCE_PRESENTATIONAL, ASSISTANCE_PREFIX),
        // [evidence] expands to the quoted paragraphs, or to nothing when ungrounded.
        PromptTemplate::new(ids::ASSISTANCE_EPISTEMOLOGICAL, format!("{ASSISTANCE_PREFIX}.[evidence]")),
        PromptTemplate::new(
            ids::LLM_RATER,
            format!(
                "{RATER_SCALE}\nQuestion: [question]\nAnswer: [answer]\nCritique: [critique]\nStatement: [statement]\n\n{RATER_FORMAT}"
            ),
        )
        .with_system(RATER_SYSTEM),
        PromptTemplate::new(
            ids::LLM_RATER_NO_CRITIQUE,
            format!("{RATER_SCALE}\nQuestion: [question]\nAnswer: [answer]\nStatement: [statement]\n\n{RATER_FORMAT}"),
        )
        .with_system(RATER_SYSTEM),
        PromptTemplate::new(ids::GENERATE_QUESTIONS, GENERATE_QUESTIONS_TEXT),
    ];
    templates.into_iter().map(|t| (t.id.clone(), t)).collect()
}

pub fn template(id: &str) -> Result<PromptTemplate, PromptError> {
    registry().remove(id).ok_or_else(|| PromptError::UnknownTemplate(id.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_substitution() {
        let t = PromptTemplate::new("t", "Question: [question]");
        assert_eq!(render_prompt(&t, &[("question", "Q")]).unwrap(), "Question: Q");
    }

    #[test]
    fn rate_passages_contains_inputs_and_scale() {
        let t = template(ids::RATE_PASSAGES).unwrap();
        let text = render_prompt(&t, &[("keypoint", "K"), ("par", "P")]).unwrap();
        assert!(text.contains("Statement: K"));
        assert!(text.contains("Passage: P"));
        assert!(text.contains("0 (completely irrelevant) to 100"));
    }

    #[test]
    fn missing_and_unknown_slots() {
        let t = template(ids::OBTAIN_URL).unwrap();
        assert_eq!(
            render_prompt(&t, &[("question", "Q")]),
            Err(PromptError::MissingSlot("answer".into()))
        );
        assert_eq!(
            render_prompt(&t, &[("question", "Q"), ("answer", "A"), ("par", "P")]),
            Err(PromptError::UnknownSlot("par".into()))
        );
    }

    #[test]
    fn values_are_not_rescanned() {
        let t = PromptTemplate::new("t", "[a] and [b]");
        let out = render_prompt(&t, &[("a", "[b]"), ("b", "x")]).unwrap();
        assert_eq!(out, "[b] and x");
    }

    #[test]
    fn non_slot_brackets_are_literal() {
        let t = PromptTemplate::new("t", "see [1] and [Foo] [question]");
        assert_eq!(t.slots(), vec!["question".to_string()]);
        assert_eq!(render_prompt(&t, &[("question", "q")]).unwrap(), "see [1] and [Foo] q");
    }

    #[test]
    fn registry_slots() {
        let r = registry();
        assert_eq!(r.len(), 10);
        assert_eq!(r[ids::RATE_PASSAGES].slots(), ["keypoint", "par"]);
        assert_eq!(r[ids::ASSISTANCE_EPISTEMOLOGICAL].slots(), ["question", "answer", "statement", "evidence"]);
        assert_eq!(r[ids::LLM_RATER].slots(), ["question", "answer", "critique", "statement"]);
        assert!(r[ids::LLM_RATER].system_text.is_some());
        assert!(r[ids::ANSWER_BASIC].user_text.starts_with(ANSWER_INSTRUCTION));
    }
}
