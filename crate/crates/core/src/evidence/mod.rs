//! Wiki article fetching and paragraph splitting.

#[cfg(feature = "net")]
mod fetch;
#[cfg(feature = "net")]
mod html;

#[cfg(feature = "net")]
pub use fetch::{Article, ArticleFetcher};
#[cfg(feature = "net")]
pub use html::html_to_text;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use url::Url;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvidenceError {
    #[error("`{0}` is not an article URL on a configured wiki host")]
    InvalidUrl(String),
    #[error("article not found: {0}")]
    NotFound(String),
    #[error("network error fetching {url} after {attempts} attempt(s): {detail}")]
    NetworkError { url: String, attempts: u32, detail: String },
    #[error("article cache: {0}")]
    Cache(String),
}

impl EvidenceError {
    pub fn code(&self) -> &'static str {
        match self {
            EvidenceError::InvalidUrl(_) => "invalid_url",
            EvidenceError::NotFound(_) => "not_found",
            EvidenceError::NetworkError { .. } => "network_error",
            EvidenceError::Cache(_) => "cache_io",
        }
    }
}

/// Hosts and path prefix an evidence URL must match. Host entries are exact
/// names or `*.suffix` wildcards; ports are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WikiPattern {
    pub hosts: Vec<String>,
    pub path_prefix: String,
}

impl Default for WikiPattern {
    fn default() -> Self {
        WikiPattern { hosts: vec!["*.wikipedia.org".into()], path_prefix: "/wiki/".into() }
    }
}

impl WikiPattern {
    pub fn for_host(host: impl Into<String>) -> Self {
        WikiPattern { hosts: vec![host.into()], ..WikiPattern::default() }
    }

    fn host_matches(&self, host: &str) -> bool {
        let host = host.to_ascii_lowercase();
        self.hosts.iter().any(|h| match h.strip_prefix("*.") {
            Some(suffix) => host.ends_with(&format!(".{suffix}")),
            None => host == h.to_ascii_lowercase(),
        })
    }

    /// Parses and checks `candidate`, returning the normalized URL.
    pub fn check(&self, candidate: &str) -> Result<Url, EvidenceError> {
        let invalid = || EvidenceError::InvalidUrl(candidate.to_string());
        let url = Url::parse(candidate.trim()).map_err(|_| invalid())?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(invalid());
        }
        let host = url.host_str().ok_or_else(invalid)?;
        let title = url.path().strip_prefix(self.path_prefix.as_str()).ok_or_else(invalid)?;
        if !self.host_matches(host) || title.is_empty() || title.contains('/') {
            return Err(invalid());
        }
        Ok(url)
    }

    pub fn title_of(&self, url: &Url) -> String {
        let raw = url.path().strip_prefix(self.path_prefix.as_str()).unwrap_or(url.path());
        let decoded = url::form_urlencoded::parse(format!("t={raw}").as_bytes())
            .next()
            .map(|(_, v)| v.into_owned())
            .unwrap_or_else(|| raw.to_string());
        decoded.replace('_', " ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleRef {
    pub url: String,
    pub title: String,
    pub fetched_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub article: ArticleRef,
    pub index: usize,
    pub text: String,
}

/// Anything that can resolve an article URL to its plain text.
pub trait ArticleSource: Send + Sync {
    fn fetch_text(&self, url: &str) -> Result<(ArticleRef, String), EvidenceError>;
}

/// Fixed in-memory articles keyed by URL, for tests and offline runs.
/// References carry a constant epoch timestamp so outputs stay reproducible.
#[derive(Debug, Clone, Default)]
pub struct StaticArticles {
    pattern: WikiPattern,
    articles: std::collections::BTreeMap<String, String>,
}

impl StaticArticles {
    pub fn new(pattern: WikiPattern) -> Self {
        StaticArticles { pattern, articles: Default::default() }
    }

    pub fn with(mut self, url: &str, text: impl Into<String>) -> Self {
        self.articles.insert(url.to_string(), text.into());
        self
    }
}

impl ArticleSource for StaticArticles {
    fn fetch_text(&self, url: &str) -> Result<(ArticleRef, String), EvidenceError> {
        let parsed = self.pattern.check(url)?;
        let text = self
            .articles
            .get(parsed.as_str())
            .or_else(|| self.articles.get(url))
            .ok_or_else(|| EvidenceError::NotFound(parsed.to_string()))?;
        let reference = ArticleRef {
            url: parsed.to_string(),
            title: self.pattern.title_of(&parsed),
            fetched_at: DateTime::<Utc>::UNIX_EPOCH,
            revision_note: None,
        };
        Ok((reference, text.clone()))
    }
}

fn normalize_block(lines: &[&str]) -> String {
    lines.iter().flat_map(|l| l.split_whitespace()).collect::<Vec<_>>().join(" ")
}

/// Splits `text` into blocks separated by one or more blank lines. Whitespace
/// inside a block is collapsed to single spaces; blocks of `min_chars`
/// characters or fewer are dropped.
pub fn split_paragraphs(text: &str, min_chars: usize) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(normalize_block(&current));
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    blocks.retain(|b| !b.is_empty() && b.chars().count() > min_chars);
    blocks
}

/// Splits an article into indexed paragraphs (indices contiguous after dropping).
pub fn article_paragraphs(article: &ArticleRef, text: &str, min_chars: usize) -> Vec<Paragraph> {
    split_paragraphs(text, min_chars)
        .into_iter()
        .enumerate()
        .map(|(index, text)| Paragraph { article: article.clone(), index, text })
        .collect()
}
