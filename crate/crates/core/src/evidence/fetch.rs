use super::{html_to_text, ArticleRef, EvidenceError, WikiPattern};
use crate::llm::{AuditLog, AuditRecord, Limiter, RetryPolicy};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub reference: ArticleRef,
    pub text: String,
}

/// Fetches articles from the configured wiki host, caching the extracted
/// plain text on disk (one `.txt` plus one `.meta.json` per URL digest).
pub struct ArticleFetcher {
    pattern: WikiPattern,
    cache_dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, Article>>,
    agent: ureq::Agent,
    retry: RetryPolicy,
    audit: Option<Arc<AuditLog>>,
    per_host: Mutex<HashMap<String, Arc<Limiter>>>,
    host_limit: usize,
    network_calls: AtomicUsize,
}

impl ArticleFetcher {
    pub fn new(pattern: WikiPattern) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        ArticleFetcher {
            pattern,
            cache_dir: None,
            memory: Mutex::new(HashMap::new()),
            agent,
            retry: RetryPolicy::default(),
            audit: None,
            per_host: Mutex::new(HashMap::new()),
            host_limit: 4,
            network_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        self.cache_dir = Some(dir);
        Ok(self)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn with_host_limit(mut self, limit: usize) -> Self {
        self.host_limit = limit.max(1);
        self
    }

    pub fn pattern(&self) -> &WikiPattern {
        &self.pattern
    }

    /// Number of HTTP requests issued so far (cache hits excluded).
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    fn digest(url: &str) -> String {
        hex::encode(Sha256::digest(url.as_bytes()))
    }

    fn read_cache(&self, url: &str) -> Option<Article> {
        if let Some(a) = self.memory.lock().unwrap().get(url) {
            return Some(a.clone());
        }
        let dir = self.cache_dir.as_ref()?;
        let d = Self::digest(url);
        let text = fs::read_to_string(dir.join(format!("{d}.txt"))).ok()?;
        let meta = fs::read(dir.join(format!("{d}.meta.json"))).ok()?;
        let reference: ArticleRef = serde_json::from_slice(&meta).ok()?;
        let article = Article { reference, text };
        self.memory.lock().unwrap().insert(url.to_string(), article.clone());
        Some(article)
    }

    fn write_cache(&self, url: &str, article: &Article) -> Result<(), EvidenceError> {
        if let Some(dir) = &self.cache_dir {
            let d = Self::digest(url);
            let io = |e: std::io::Error| EvidenceError::Cache(e.to_string());
            let tmp = dir.join(format!(".{d}.{}.tmp", std::process::id()));
            fs::write(&tmp, &article.text).map_err(io)?;
            fs::rename(&tmp, dir.join(format!("{d}.txt"))).map_err(io)?;
            let meta = serde_json::to_vec_pretty(&article.reference)
                .map_err(|e| EvidenceError::Cache(e.to_string()))?;
            fs::write(&tmp, meta).map_err(io)?;
            fs::rename(&tmp, dir.join(format!("{d}.meta.json"))).map_err(io)?;
        }
        self.memory.lock().unwrap().insert(url.to_string(), article.clone());
        Ok(())
    }

    fn host_limiter(&self, host: &str) -> Arc<Limiter> {
        self.per_host
            .lock()
            .unwrap()
            .entry(host.to_string())
            .or_insert_with(|| Arc::new(Limiter::new(self.host_limit)))
            .clone()
    }

    fn audit(&self, url: &str, outcome: &Result<String, String>) {
        if let Some(audit) = &self.audit {
            let record = AuditRecord {
                key: Self::digest(url),
                request: serde_json::json!({ "fetch": url }),
                sample_index: 0,
                response: outcome.as_ref().ok().map(|body| format!("{} bytes", body.len())),
                error: outcome.as_ref().err().cloned(),
                timestamp: Utc::now(),
            };
            if let Err(e) = audit.append_record(record) {
                tracing::warn!(%e, "failed to append fetch audit record");
            }
        }
    }

    /// Fetches an article's plain text, serving repeated URLs from the cache.
    pub fn fetch(&self, ref_url: &str) -> Result<Article, EvidenceError> {
        let url = self.pattern.check(ref_url)?;
        let key = url.to_string();
        if let Some(hit) = self.read_cache(&key) {
            return Ok(hit);
        }
        let limiter = self.host_limiter(url.host_str().unwrap_or_default());
        let mut attempt = 0;
        let (body, is_html) = loop {
            attempt += 1;
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            let result = {
                let _permit = limiter.acquire();
                self.agent.get(key.as_str()).call()
            };
            match result {
                Ok(mut resp) => {
                    let is_html = resp
                        .headers()
                        .get("content-type")
                        .and_then(|v| v.to_str().ok())
                        .is_none_or(|ct| ct.contains("html"));
                    match resp.body_mut().read_to_string() {
                        Ok(body) => {
                            self.audit(&key, &Ok(body.clone()));
                            break (body, is_html);
                        }
                        Err(e) => {
                            self.audit(&key, &Err(e.to_string()));
                            if attempt >= self.retry.max_attempts {
                                return Err(EvidenceError::NetworkError {
                                    url: key,
                                    attempts: attempt,
                                    detail: e.to_string(),
                                });
                            }
                        }
                    }
                }
                Err(ureq::Error::StatusCode(404)) => {
                    self.audit(&key, &Err("HTTP 404".into()));
                    return Err(EvidenceError::NotFound(key));
                }
                Err(e) => {
                    self.audit(&key, &Err(e.to_string()));
                    let retryable = !matches!(e, ureq::Error::StatusCode(c) if c < 500);
                    if !retryable || attempt >= self.retry.max_attempts {
                        return Err(EvidenceError::NetworkError {
                            url: key,
                            attempts: attempt,
                            detail: e.to_string(),
                        });
                    }
                }
            }
            std::thread::sleep(self.retry.delay_before(attempt));
        };
        let text = if is_html { html_to_text(&body) } else { body };
        let article = Article {
            reference: ArticleRef {
                url: key.clone(),
                title: self.pattern.title_of(&url),
                fetched_at: Utc::now(),
                revision_note: None,
            },
            text,
        };
        self.write_cache(&key, &article)?;
        Ok(article)
    }
}

impl super::ArticleSource for ArticleFetcher {
    fn fetch_text(&self, url: &str) -> Result<(ArticleRef, String), EvidenceError> {
        self.fetch(url).map(|a| (a.reference, a.text))
    }
}
