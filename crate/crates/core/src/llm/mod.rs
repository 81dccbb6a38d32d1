//! Uniform access to text-generation and embedding providers with response
//! caching, bounded retries and an append-only audit log.

mod cache;
pub mod prompt;
mod provider;

pub use cache::{AuditLog, AuditRecord, CacheEntry, ResponseCache};
pub use prompt::{registry, render_prompt, template, PromptError, PromptTemplate, RenderedPrompt};
#[cfg(feature = "net")]
pub use provider::OpenAiCompatibleProvider;
pub use provider::{
    FixedEmbedder, HashEmbedder, Provider, ProviderCall, ProviderError, ScriptRule, ScriptSpec,
    ScriptedProvider,
};

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRequest {
    pub provider_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    pub rendered_prompt: String,
    pub temperature: f64,
    pub sample_count: u32,
    pub max_tokens: u32,
}

impl GenerationRequest {
    pub fn new(provider_id: impl Into<String>, prompt: RenderedPrompt) -> Self {
        GenerationRequest {
            provider_id: provider_id.into(),
            system_prompt: prompt.system,
            rendered_prompt: prompt.user,
            temperature: 0.0,
            sample_count: 1,
            max_tokens: 512,
        }
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn samples(mut self, n: u32) -> Self {
        self.sample_count = n;
        self
    }

    pub fn max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    /// Cache key for one sample of this request.
    pub fn cache_key(&self, sample_index: u32) -> String {
        #[derive(Serialize)]
        struct KeyMaterial<'a> {
            provider_id: &'a str,
            system: Option<&'a str>,
            prompt: &'a str,
            temperature: f64,
            sample_index: u32,
            max_tokens: u32,
        }
        let material = serde_json::to_vec(&KeyMaterial {
            provider_id: &self.provider_id,
            system: self.system_prompt.as_deref(),
            prompt: &self.rendered_prompt,
            temperature: self.temperature,
            sample_index,
            max_tokens: self.max_tokens,
        })
        .expect("key material serializes");
        hex::encode(Sha256::digest(material))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("no provider configured under id `{0}`")]
    UnknownProvider(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider `{provider}` unavailable after {attempts} attempt(s): {last}")]
    ProviderUnavailable { provider: String, attempts: u32, last: String },
    #[error("provider `{0}` rate limited the request")]
    RateLimited(String),
    #[error("malformed response from `{provider}`: {detail}")]
    MalformedResponse { provider: String, detail: String },
    #[error("embedding batch has inconsistent dimensions")]
    DimensionMismatch,
    #[error("provider `{0}` does not support this operation")]
    Unsupported(String),
    #[error("cache i/o: {0}")]
    Cache(String),
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::UnknownProvider(_) => "unknown_provider",
            GatewayError::InvalidRequest(_) => "invalid_request",
            GatewayError::ProviderUnavailable { .. } => "provider_unavailable",
            GatewayError::RateLimited(_) => "rate_limited",
            GatewayError::MalformedResponse { .. } => "malformed_response",
            GatewayError::DimensionMismatch => "dimension_mismatch",
            GatewayError::Unsupported(_) => "unsupported",
            GatewayError::Cache(_) => "cache_io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        RetryPolicy { max_attempts: 3, base_delay: Duration::ZERO }
    }

    pub(crate) fn delay_before(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(1))
    }
}

/// Counting semaphore bounding in-flight requests per provider.
pub(crate) struct Limiter {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    pub(crate) fn new(limit: usize) -> Self {
        Limiter { available: Mutex::new(limit.max(1)), freed: Condvar::new() }
    }

    pub(crate) fn acquire(&self) -> LimiterGuard<'_> {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.freed.wait(n).unwrap();
        }
        *n -= 1;
        LimiterGuard(self)
    }
}

pub(crate) struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

struct ProviderSlot {
    provider: Arc<dyn Provider>,
    limiter: Limiter,
}

/// Routes requests to named providers. Safe to share between threads.
pub struct Gateway {
    providers: BTreeMap<String, ProviderSlot>,
    cache: Option<ResponseCache>,
    audit: Option<AuditLog>,
    retry: RetryPolicy,
}

impl Default for Gateway {
    fn default() -> Self {
        Gateway::new()
    }
}

impl Gateway {
    pub fn new() -> Self {
        Gateway { providers: BTreeMap::new(), cache: None, audit: None, retry: RetryPolicy::default() }
    }

    pub fn with_provider(
        mut self,
        id: impl Into<String>,
        provider: Arc<dyn Provider>,
        concurrency_limit: usize,
    ) -> Self {
        self.providers
            .insert(id.into(), ProviderSlot { provider, limiter: Limiter::new(concurrency_limit) });
        self
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_audit(mut self, audit: AuditLog) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn has_provider(&self, id: &str) -> bool {
        self.providers.contains_key(id)
    }

    pub fn audit(&self) -> Option<&AuditLog> {
        self.audit.as_ref()
    }

    fn slot(&self, id: &str) -> Result<&ProviderSlot, GatewayError> {
        self.providers.get(id).ok_or_else(|| GatewayError::UnknownProvider(id.to_string()))
    }

    /// Returns exactly `sample_count` completions.
    pub fn complete(&self, request: &GenerationRequest) -> Result<Vec<String>, GatewayError> {
        if request.sample_count == 0 {
            return Err(GatewayError::InvalidRequest("sample_count must be at least 1".into()));
        }
        if !(request.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest("temperature must be non-negative".into()));
        }
        (0..request.sample_count).map(|i| self.complete_sample(request, i)).collect()
    }

    /// Completes a single sample slot. Distinct sample indices are cached
    /// separately, which is also how callers request a fresh retry sample.
    pub fn complete_sample(
        &self,
        request: &GenerationRequest,
        sample_index: u32,
    ) -> Result<String, GatewayError> {
        let slot = self.slot(&request.provider_id)?;
        let key = request.cache_key(sample_index);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key) {
                return Ok(hit.response_text);
            }
        }
        let call = ProviderCall {
            system: request.system_prompt.as_deref(),
            prompt: &request.rendered_prompt,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            sample_index,
        };
        let mut attempt = 0;
        let text = loop {
            attempt += 1;
            let result = {
                let _permit = slot.limiter.acquire();
                slot.provider.generate(&call)
            };
            if let Some(audit) = &self.audit {
                audit.append(&key, request, sample_index, &result).map_err(GatewayError::Cache)?;
            }
            match result {
                Ok(text) => break text,
                Err(ProviderError::Unavailable(msg)) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(GatewayError::ProviderUnavailable {
                            provider: request.provider_id.clone(),
                            attempts: attempt,
                            last: msg,
                        });
                    }
                    tracing::warn!(provider = %request.provider_id, attempt, "provider unavailable, retrying");
                    std::thread::sleep(self.retry.delay_before(attempt));
                }
                Err(ProviderError::RateLimited) => {
                    return Err(GatewayError::RateLimited(request.provider_id.clone()))
                }
                Err(ProviderError::Malformed(detail)) => {
                    return Err(GatewayError::MalformedResponse {
                        provider: request.provider_id.clone(),
                        detail,
                    })
                }
                Err(ProviderError::Unsupported) => {
                    return Err(GatewayError::Unsupported(request.provider_id.clone()))
                }
            }
        };
        if let Some(cache) = &self.cache {
            cache.put(&key, &text).map_err(GatewayError::Cache)?;
        }
        Ok(text)
    }

    /// Embeds `texts`, returning one L2-normalized vector per input.
    pub fn embed(&self, provider_id: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let slot = self.slot(provider_id)?;
        let mut attempt = 0;
        let raw = loop {
            attempt += 1;
            let result = {
                let _permit = slot.limiter.acquire();
                slot.provider.embed(texts)
            };
            match result {
                Ok(v) => break v,
                Err(ProviderError::Unavailable(msg)) if attempt < self.retry.max_attempts => {
                    tracing::warn!(provider = provider_id, attempt, %msg, "embedding provider unavailable, retrying");
                    std::thread::sleep(self.retry.delay_before(attempt));
                }
                Err(ProviderError::Unavailable(last)) => {
                    return Err(GatewayError::ProviderUnavailable {
                        provider: provider_id.to_string(),
                        attempts: attempt,
                        last,
                    })
                }
                Err(ProviderError::RateLimited) => {
                    return Err(GatewayError::RateLimited(provider_id.to_string()))
                }
                Err(ProviderError::Malformed(detail)) => {
                    return Err(GatewayError::MalformedResponse {
                        provider: provider_id.to_string(),
                        detail,
                    })
                }
                Err(ProviderError::Unsupported) => {
                    return Err(GatewayError::Unsupported(provider_id.to_string()))
                }
            }
        };
        if raw.len() != texts.len() {
            return Err(GatewayError::MalformedResponse {
                provider: provider_id.to_string(),
                detail: format!("{} vectors for {} inputs", raw.len(), texts.len()),
            });
        }
        let dim = raw[0].len();
        if dim == 0 || raw.iter().any(|v| v.len() != dim) {
            return Err(GatewayError::DimensionMismatch);
        }
        raw.into_iter()
            .map(|v| {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 || !norm.is_finite() {
                    return Err(GatewayError::MalformedResponse {
                        provider: provider_id.to_string(),
                        detail: "zero or non-finite embedding".into(),
                    });
                }
                Ok(v.into_iter().map(|x| x / norm).collect())
            })
            .collect()
    }
}

/// Cosine similarity of two vectors (not assumed normalized).
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
