use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// One provider call for one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProviderCall<'a> {
    pub system: Option<&'a str>,
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
    pub sample_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("provider rate limited the request")]
    RateLimited,
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("operation not supported by this provider")]
    Unsupported,
}

/// A text-generation and/or embedding backend. Provider specifics live in
/// configuration; the gateway only sees these two calls.
pub trait Provider: Send + Sync {
    fn generate(&self, call: &ProviderCall<'_>) -> Result<String, ProviderError>;

    fn embed(&self, _texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Err(ProviderError::Unsupported)
    }
}

/// A reply rule: fires when the prompt contains every needle. The reply for
/// sample `i` is `replies[i]`, repeating the last reply for later samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    pub contains: Vec<String>,
    pub replies: Vec<String>,
}

/// Serializable description of a scripted provider (used by configuration files).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSpec {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub fallback: Option<String>,
}

/// Deterministic test double. Queued replies are consumed first, then rules
/// are tried in order, then the fallback.
pub struct ScriptedProvider {
    queue: Mutex<VecDeque<Result<String, ProviderError>>>,
    rules: Vec<ScriptRule>,
    fallback: Option<String>,
    embedder: HashEmbedder,
    calls: AtomicUsize,
    prompts: Mutex<Vec<String>>,
}

impl Default for ScriptedProvider {
    fn default() -> Self {
        ScriptedProvider::new()
    }
}

impl ScriptedProvider {
    pub fn new() -> Self {
        ScriptedProvider {
            queue: Mutex::new(VecDeque::new()),
            rules: Vec::new(),
            fallback: None,
            embedder: HashEmbedder::default(),
            calls: AtomicUsize::new(0),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn from_spec(spec: &ScriptSpec) -> Self {
        let mut p = ScriptedProvider::new();
        p.rules = spec.rules.clone();
        p.fallback = spec.fallback.clone();
        p
    }

    pub fn reply(self, text: impl Into<String>) -> Self {
        self.queue.lock().unwrap().push_back(Ok(text.into()));
        self
    }

    pub fn replies<I, S>(self, texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        texts.into_iter().fold(self, |p, t| p.reply(t))
    }

    pub fn fail(self, error: ProviderError) -> Self {
        self.queue.lock().unwrap().push_back(Err(error));
        self
    }

    pub fn rule<I, S>(mut self, contains: I, replies: &[&str]) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.rules.push(ScriptRule {
            contains: contains.into_iter().map(Into::into).collect(),
            replies: replies.iter().map(|r| r.to_string()).collect(),
        });
        self
    }

    pub fn fallback(mut self, text: impl Into<String>) -> Self {
        self.fallback = Some(text.into());
        self
    }

    /// Number of `generate` calls received so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every prompt received, in arrival order.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl Provider for ScriptedProvider {
    fn generate(&self, call: &ProviderCall<'_>) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().unwrap().push(call.prompt.to_string());
        if let Some(next) = self.queue.lock().unwrap().pop_front() {
            return next;
        }
        let rule = self
            .rules
            .iter()
            .find(|r| r.contains.iter().all(|needle| call.prompt.contains(needle.as_str())));
        if let Some(rule) = rule {
            let i = (call.sample_index as usize).min(rule.replies.len().saturating_sub(1));
            return rule
                .replies
                .get(i)
                .cloned()
                .ok_or_else(|| ProviderError::Malformed("rule has no replies".into()));
        }
        self.fallback
            .clone()
            .ok_or_else(|| ProviderError::Unavailable("no scripted reply for prompt".into()))
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        self.embedder.embed(texts)
    }
}

/// Deterministic feature-hashing embedder: lowercase word tokens are hashed
/// (with a seed) into signed buckets. Identical texts map to identical vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 64, seed: 0 }
    }
}

impl HashEmbedder {
    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let lower = text.to_lowercase();
        let mut tokens: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            tokens.push("");
        }
        for token in tokens {
            let digest = Sha256::new()
                .chain_update(self.seed.to_le_bytes())
                .chain_update(token.as_bytes())
                .finalize();
            let bucket = u64::from_le_bytes(digest[..8].try_into().unwrap()) % self.dim as u64;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket as usize] += sign;
        }
        v
    }
}

impl Provider for HashEmbedder {
    fn generate(&self, _call: &ProviderCall<'_>) -> Result<String, ProviderError> {
        Err(ProviderError::Unsupported)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Explicit text → vector table, for hand-built similarity fixtures.
#[derive(Debug, Clone, Default)]
pub struct FixedEmbedder {
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl Provider for FixedEmbedder {
    fn generate(&self, _call: &ProviderCall<'_>) -> Result<String, ProviderError> {
        Err(ProviderError::Unsupported)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        texts
            .iter()
            .map(|t| {
                self.vectors
                    .get(t)
                    .cloned()
                    .ok_or_else(|| ProviderError::Unavailable(format!("no vector for `{t}`")))
            })
            .collect()
    }
}

#[cfg(feature = "net")]
pub use http::OpenAiCompatibleProvider;

#[cfg(feature = "net")]
mod http {
    use super::{Provider, ProviderCall, ProviderError};
    use serde_json::{json, Value};
    use std::time::Duration;

    /// Chat-completions / embeddings provider speaking the widely used
    /// OpenAI-style JSON protocol.
    pub struct OpenAiCompatibleProvider {
        agent: ureq::Agent,
        endpoint: String,
        model: String,
        embedding_model: Option<String>,
        api_key: Option<String>,
    }

    impl OpenAiCompatibleProvider {
        pub fn new(
            endpoint: impl Into<String>,
            model: impl Into<String>,
            embedding_model: Option<String>,
            api_key: Option<String>,
            timeout: Duration,
        ) -> Self {
            let agent: ureq::Agent =
                ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
            OpenAiCompatibleProvider {
                agent,
                endpoint: endpoint.into().trim_end_matches('/').to_string(),
                model: model.into(),
                embedding_model,
                api_key,
            }
        }

        fn post(&self, path: &str, body: Value) -> Result<Value, ProviderError> {
            let mut req = self.agent.post(format!("{}/{path}", self.endpoint));
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => resp
                    .body_mut()
                    .read_json::<Value>()
                    .map_err(|e| ProviderError::Malformed(e.to_string())),
                Err(ureq::Error::StatusCode(429)) => Err(ProviderError::RateLimited),
                Err(ureq::Error::StatusCode(code)) if code >= 500 => {
                    Err(ProviderError::Unavailable(format!("HTTP {code}")))
                }
                Err(ureq::Error::StatusCode(code)) => {
                    Err(ProviderError::Malformed(format!("HTTP {code}")))
                }
                Err(e) => Err(ProviderError::Unavailable(e.to_string())),
            }
        }
    }

    impl Provider for OpenAiCompatibleProvider {
        fn generate(&self, call: &ProviderCall<'_>) -> Result<String, ProviderError> {
            let mut messages = Vec::new();
            if let Some(system) = call.system {
                messages.push(json!({"role": "system", "content": system}));
            }
            messages.push(json!({"role": "user", "content": call.prompt}));
            let body = json!({
                "model": self.model,
                "messages": messages,
                "temperature": call.temperature,
                "max_tokens": call.max_tokens,
            });
            let value = self.post("chat/completions", body)?;
            value["choices"][0]["message"]["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| ProviderError::Malformed("missing choices[0].message.content".into()))
        }

        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
            let model = self.embedding_model.as_ref().ok_or(ProviderError::Unsupported)?;
            let value = self.post("embeddings", json!({"model": model, "input": texts}))?;
            let data = value["data"]
                .as_array()
                .ok_or_else(|| ProviderError::Malformed("missing data".into()))?;
            data.iter()
                .map(|item| {
                    item["embedding"]
                        .as_array()
                        .and_then(|xs| xs.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
                        .ok_or_else(|| ProviderError::Malformed("bad embedding".into()))
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(prompt: &str, sample_index: u32) -> ProviderCall<'_> {
        ProviderCall { system: None, prompt, temperature: 0.0, max_tokens: 16, sample_index }
    }

    #[test]
    fn queue_then_rules_then_fallback() {
        let p = ScriptedProvider::new()
            .reply("first")
            .rule(["rate"], &["a", "b"])
            .fallback("fb");
        assert_eq!(p.generate(&call("rate", 0)).unwrap(), "first");
        assert_eq!(p.generate(&call("rate", 0)).unwrap(), "a");
        assert_eq!(p.generate(&call("rate", 1)).unwrap(), "b");
        assert_eq!(p.generate(&call("rate", 5)).unwrap(), "b");
        assert_eq!(p.generate(&call("other", 0)).unwrap(), "fb");
        assert_eq!(p.calls(), 5);
    }

    #[test]
    fn hash_embedder_is_deterministic() {
        let e = HashEmbedder::default();
        assert_eq!(e.vector("Sea level rise"), e.vector("sea LEVEL rise"));
        assert_ne!(e.vector("a"), e.vector("b"));
        assert_ne!(HashEmbedder { dim: 64, seed: 1 }.vector("a"), e.vector("a"));
    }
}
