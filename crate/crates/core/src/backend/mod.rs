//! Embedding backends.
//!
//! A [`Backend`] turns a rendered prompt into the hidden state at its last
//! token (and optionally the word the model generates after it). [`Embedder`]
//! wraps a backend with the run-level checks (constant dimension, finite
//! values, quote-free words) and batched, cached, bounded-parallel fetching.
//!
//! Two transports ship with the crate: [`HttpBackend`] speaks the JSON wire
//! protocol of an inference sidecar, and [`MockBackend`] derives vectors from
//! a hash of the prompt so tests run offline.

mod cache;
mod http;
mod mock;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompting::ConditionalPrompt;

pub use cache::{Cache, CacheStats};
pub use http::{HttpBackend, WireError, WireRequest, WireResponse};
pub use mock::{mock_embed, MockBackend, PostMixBackend};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("embedding dimension {found} differs from {expected} seen earlier in this run")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend returned HTTP {status}: {message}")]
    Server { status: u16, message: String },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("prompt #{index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<BackendError>,
    },
    #[error("cache error: {0}")]
    Cache(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    /// Strips [`BackendError::AtIndex`] wrappers.
    pub fn root(&self) -> &BackendError {
        match self {
            BackendError::AtIndex { source, .. } => source.root(),
            other => other,
        }
    }
}

/// A dense, finite, non-empty embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, BackendError> {
        if values.is_empty() {
            return Err(BackendError::Protocol("empty embedding".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(BackendError::Protocol(format!("non-finite embedding value at {i}")));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

impl TryFrom<Vec<f32>> for EmbeddingVector {
    type Error = BackendError;
    fn try_from(v: Vec<f32>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<EmbeddingVector> for Vec<f32> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

impl AsRef<[f32]> for EmbeddingVector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResult {
    pub embedding: EmbeddingVector,
    /// Never contains a double quote.
    pub generated_word: Option<String>,
    pub model_id: String,
    pub layer_index: i32,
}

/// Per-call knobs sent to a backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedOptions {
    pub layer_index: i32,
    pub generate_word: bool,
    pub max_word_tokens: u32,
}

pub trait Backend: Send + Sync {
    fn embed(&self, prompt: &ConditionalPrompt, options: &EmbedOptions) -> Result<EmbedResult, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn embed(&self, prompt: &ConditionalPrompt, options: &EmbedOptions) -> Result<EmbedResult, BackendError> {
        (**self).embed(prompt, options)
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn embed(&self, prompt: &ConditionalPrompt, options: &EmbedOptions) -> Result<EmbedResult, BackendError> {
        (**self).embed(prompt, options)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Endpoint {
    Mock { dim: usize, seed: u64 },
    Http { url: String },
}

impl Endpoint {
    pub const DEFAULT_MOCK_DIM: usize = 64;

    /// Accepts `mock`, `mock:DIM`, `mock:DIM:SEED`, or an `http(s)://` base URL.
    pub fn parse(s: &str) -> Result<Self, BackendError> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("mock") {
            let mut parts = rest.split(':').skip(1);
            let bad = || BackendError::Config(format!("cannot parse mock endpoint {s:?}"));
            if !rest.is_empty() && !rest.starts_with(':') {
                return Err(bad());
            }
            let dim = match parts.next() {
                Some(d) => d.parse().map_err(|_| bad())?,
                None => Self::DEFAULT_MOCK_DIM,
            };
            let seed = match parts.next() {
                Some(d) => d.parse().map_err(|_| bad())?,
                None => 0,
            };
            if parts.next().is_some() {
                return Err(bad());
            }
            return Ok(Endpoint::Mock { dim, seed });
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(Endpoint::Http {
                url: s.trim_end_matches('/').to_owned(),
            });
        }
        Err(BackendError::Config(format!(
            "endpoint must be `mock[:dim[:seed]]` or an http(s) URL, got {s:?}"
        )))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Mock { dim, seed } => write!(f, "mock:{dim}:{seed}"),
            Endpoint::Http { url } => f.write_str(url),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint: Endpoint,
    pub model_id: String,
    /// Negative values index from the final layer.
    pub layer_index: i32,
    #[serde(with = "duration_secs")]
    pub request_timeout: Duration,
    pub max_parallel_requests: usize,
    pub generate_words: bool,
    pub max_word_tokens: u32,
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

impl BackendConfig {
    pub fn new(endpoint: Endpoint, model_id: impl Into<String>) -> Self {
        Self {
            endpoint,
            model_id: model_id.into(),
            layer_index: -1,
            request_timeout: Duration::from_secs(120),
            max_parallel_requests: 4,
            generate_words: false,
            max_word_tokens: 16,
        }
    }

    /// Hash-seeded mock; the model id encodes dimension and seed so cache
    /// entries from different mocks never collide.
    pub fn mock(dim: usize, seed: u64) -> Self {
        Self::new(Endpoint::Mock { dim, seed }, format!("mock-d{dim}-s{seed}"))
    }

    pub fn http(url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self::new(
            Endpoint::Http {
                url: url.into().trim_end_matches('/').to_owned(),
            },
            model_id,
        )
    }

    pub fn options(&self) -> EmbedOptions {
        EmbedOptions {
            layer_index: self.layer_index,
            generate_word: self.generate_words,
            max_word_tokens: self.max_word_tokens,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_parallel_requests == 0 {
            return Err(BackendError::Config("max_parallel_requests must be at least 1".into()));
        }
        if self.max_word_tokens == 0 {
            return Err(BackendError::Config("max_word_tokens must be at least 1".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(BackendError::Config("model_id must be non-empty".into()));
        }
        if let Endpoint::Mock { dim, .. } = self.endpoint {
            if dim < 2 {
                return Err(BackendError::Config(format!("mock dimension must be at least 2, got {dim}")));
            }
        }
        Ok(())
    }
}

/// SHA-256 over (model id, layer index, rendered prompt), hex encoded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    digest: String,
}

impl CacheKey {
    pub fn new(model_id: &str, layer_index: i32, rendered: &str) -> Self {
        let mut h = Sha256::new();
        // length prefixes keep field boundaries unambiguous
        h.update((model_id.len() as u64).to_le_bytes());
        h.update(model_id.as_bytes());
        h.update(i64::from(layer_index).to_le_bytes());
        h.update((rendered.len() as u64).to_le_bytes());
        h.update(rendered.as_bytes());
        Self {
            digest: hex::encode(h.finalize()),
        }
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.digest)
    }
}

/// Backend plus run-level validation, caching and bounded parallelism.
pub struct Embedder {
    config: BackendConfig,
    backend: Box<dyn Backend>,
    dim: Mutex<Option<usize>>,
}

impl fmt::Debug for Embedder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Embedder").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Embedder {
    /// Builds the transport named by `config.endpoint`.
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let backend: Box<dyn Backend> = match &config.endpoint {
            Endpoint::Mock { dim, seed } => Box::new(MockBackend::new(*dim, *seed)?),
            Endpoint::Http { url } => Box::new(HttpBackend::new(url, &config.model_id, config.request_timeout)),
        };
        Ok(Self::with_backend(config, backend))
    }

    /// Uses a caller-supplied transport; `config.endpoint` is then informational.
    pub fn with_backend(config: BackendConfig, backend: Box<dyn Backend>) -> Self {
        Self {
            config,
            backend,
            dim: Mutex::new(None),
        }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn model_id(&self) -> &str {
        &self.config.model_id
    }

    /// Dimension fixed by the first accepted result, if any.
    pub fn dim(&self) -> Option<usize> {
        *self.dim.lock().expect("dimension lock poisoned")
    }

    pub fn cache_key(&self, prompt: &ConditionalPrompt) -> CacheKey {
        CacheKey::new(&self.config.model_id, self.config.layer_index, prompt.rendered())
    }

    fn accept(&self, result: &EmbedResult) -> Result<(), BackendError> {
        if let Some(word) = &result.generated_word {
            if word.contains('"') {
                return Err(BackendError::Protocol(format!(
                    "generated word {word:?} contains the stop quote"
                )));
            }
        }
        let found = result.embedding.dim();
        let mut dim = self.dim.lock().expect("dimension lock poisoned");
        match *dim {
            None => *dim = Some(found),
            Some(expected) if expected != found => {
                return Err(BackendError::DimensionMismatch { expected, found });
            }
            Some(_) => {}
        }
        Ok(())
    }

    /// Embeds one prompt without touching any cache.
    pub fn embed(&self, prompt: &ConditionalPrompt) -> Result<EmbedResult, BackendError> {
        if prompt.rendered().is_empty() {
            return Err(BackendError::Config("rendered prompt is empty".into()));
        }
        let mut result = self.backend.embed(prompt, &self.config.options())?;
        if !self.config.generate_words {
            result.generated_word = None;
        }
        // sidecar replies were already checked against this id; offline
        // backends don't know it
        result.model_id.clone_from(&self.config.model_id);
        self.accept(&result)?;
        Ok(result)
    }

    /// Embeds `prompts`, returning results in input order.
    ///
    /// Duplicate prompts are fetched once. The cache is consulted before any
    /// backend call and filled after each success. At most
    /// `max_parallel_requests` calls are in flight. Any failure fails the
    /// whole batch, tagged with the index of the first failing prompt.
    pub fn embed_batch(
        &self,
        prompts: &[ConditionalPrompt],
        cache: Option<&Cache>,
    ) -> Result<Vec<EmbedResult>, BackendError> {
        if prompts.is_empty() {
            return Err(BackendError::EmptyBatch);
        }
        let at = |index: usize| move |e: BackendError| BackendError::AtIndex {
            index,
            source: Box::new(e),
        };

        // unique keys in first-occurrence order
        let mut slot_of: HashMap<CacheKey, usize> = HashMap::new();
        let mut unique: Vec<(usize, CacheKey)> = Vec::new();
        let mut slots = Vec::with_capacity(prompts.len());
        for (i, p) in prompts.iter().enumerate() {
            let key = self.cache_key(p);
            let slot = *slot_of.entry(key.clone()).or_insert_with(|| {
                unique.push((i, key));
                unique.len() - 1
            });
            slots.push(slot);
        }

        let mut resolved: Vec<Option<EmbedResult>> = vec![None; unique.len()];
        let mut pending = Vec::new();
        for (slot, (first, key)) in unique.iter().enumerate() {
            let hit = match cache {
                Some(c) => c.load(key).map_err(at(*first))?,
                None => None,
            };
            match hit {
                Some(r) if !self.config.generate_words || r.generated_word.is_some() => {
                    let mut r = r;
                    if !self.config.generate_words {
                        r.generated_word = None;
                    }
                    self.accept(&r).map_err(at(*first))?;
                    resolved[slot] = Some(r);
                }
                _ => pending.push(slot),
            }
        }

        if !pending.is_empty() {
            let fetched = self.fetch_parallel(prompts, &unique, &pending);
            let mut first_err: Option<(usize, BackendError)> = None;
            for (slot, outcome) in pending.iter().zip(fetched) {
                let index = unique[*slot].0;
                match outcome {
                    Some(Ok(r)) => {
                        if let Some(c) = cache {
                            c.store(&unique[*slot].1, &r).map_err(at(index))?;
                        }
                        resolved[*slot] = Some(r);
                    }
                    Some(Err(e)) if first_err.as_ref().is_none_or(|(i, _)| index < *i) => {
                        first_err = Some((index, e));
                    }
                    _ => {}
                }
            }
            if let Some((index, e)) = first_err {
                return Err(at(index)(e));
            }
        }

        Ok(slots
            .into_iter()
            .map(|s| resolved[s].clone().expect("every slot resolved"))
            .collect())
    }

    /// Runs `embed` for each pending slot with a bounded worker pool. A `None`
    /// entry means the job was skipped after another one failed.
    fn fetch_parallel(
        &self,
        prompts: &[ConditionalPrompt],
        unique: &[(usize, CacheKey)],
        pending: &[usize],
    ) -> Vec<Option<Result<EmbedResult, BackendError>>> {
        let workers = self.config.max_parallel_requests.max(1).min(pending.len());
        let next = AtomicUsize::new(0);
        let failed = AtomicBool::new(false);
        let out: Mutex<Vec<Option<Result<EmbedResult, BackendError>>>> =
            Mutex::new((0..pending.len()).map(|_| None).collect());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if failed.load(Ordering::Relaxed) {
                        break;
                    }
                    let job = next.fetch_add(1, Ordering::Relaxed);
                    if job >= pending.len() {
                        break;
                    }
                    let prompt = &prompts[unique[pending[job]].0];
                    let result = self.embed(prompt);
                    if result.is_err() {
                        failed.store(true, Ordering::Relaxed);
                    }
                    out.lock().expect("result lock poisoned")[job] = Some(result);
                });
            }
        });
        out.into_inner().expect("result lock poisoned")
    }
}
