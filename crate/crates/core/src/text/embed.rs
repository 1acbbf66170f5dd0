use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{hash64, with_retries, TextError, DEFAULT_BASE_URL};

pub const MOCK_EMBED_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub backend_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, backend_id: impl Into<String>) -> Self {
        Self { values, backend_id: backend_id.into() }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Zero vectors (e.g. the mock embedding of a token-free text) cannot
    /// take part in cosine comparisons.
    pub fn is_degenerate(&self) -> bool {
        self.norm() == 0.0
    }
}

pub trait Embedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, TextError>;

    fn id(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingOptions {
    pub model_name: String,
    pub base_url: String,
    pub request_timeout: f64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for EmbeddingOptions {
    fn default() -> Self {
        Self {
            model_name: "qwen2.5:latest".into(),
            base_url: DEFAULT_BASE_URL.into(),
            request_timeout: 120.0,
            retries: 2,
            backoff_ms: 500,
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    embedding: Vec<f64>,
}

/// Client for a local inference server's `/api/embeddings`. The dimension
/// of the first vector received is enforced on every later one.
pub struct HttpEmbedder {
    options: EmbeddingOptions,
    http: reqwest::blocking::Client,
    dim: Mutex<Option<usize>>,
}

impl HttpEmbedder {
    pub fn new(options: EmbeddingOptions) -> Result<Self, TextError> {
        if !(options.request_timeout > 0.0) {
            return Err(TextError::Precondition("request timeout must be positive".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(options.request_timeout))
            .build()
            .map_err(|e| TextError::Transport { status: None, message: e.to_string() })?;
        Ok(Self { options, http, dim: Mutex::new(None) })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, TextError> {
        if text.trim().is_empty() {
            return Err(TextError::Precondition("cannot embed empty text".into()));
        }
        let url = format!("{}/api/embeddings", self.options.base_url.trim_end_matches('/'));
        let body = json!({ "model": self.options.model_name, "prompt": text });
        let parsed: EmbeddingResponse =
            with_retries(&self.http, &url, &body, self.options.retries, self.options.backoff_ms)?;
        if parsed.embedding.is_empty() || parsed.embedding.iter().any(|v| !v.is_finite()) {
            return Err(TextError::Degenerate("embedding is empty or has non-finite entries".into()));
        }
        let mut dim = self.dim.lock().expect("dimension lock poisoned");
        match *dim {
            Some(expected) if expected != parsed.embedding.len() => {
                return Err(TextError::DimMismatch { expected, got: parsed.embedding.len() });
            }
            None => *dim = Some(parsed.embedding.len()),
            _ => {}
        }
        Ok(EmbeddingVector::new(parsed.embedding, self.id()))
    }

    fn id(&self) -> String {
        format!("http:{}", self.options.model_name)
    }
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Signed feature hashing of word tokens into `dim` buckets, L2-normalized.
/// A text without word tokens maps to the zero vector.
pub fn mock_embed_dim(text: &str, dim: usize) -> EmbeddingVector {
    let mut values = vec![0.0; dim];
    for token in tokens(text) {
        let h = hash64(token.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        values[bucket] += sign;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    EmbeddingVector::new(values, format!("mock:{dim}"))
}

pub fn mock_embed(text: &str) -> EmbeddingVector {
    mock_embed_dim(text, MOCK_EMBED_DIM)
}

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    pub dim: usize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self { dim: MOCK_EMBED_DIM }
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, TextError> {
        Ok(mock_embed_dim(text, self.dim))
    }

    fn id(&self) -> String {
        format!("mock:{}", self.dim)
    }
}

/// Memoizes embeddings by exact text so that each distinct text reaches the
/// backend at most once.
pub struct CachedEmbedder<E> {
    inner: E,
    cache: Mutex<HashMap<String, EmbeddingVector>>,
    backend_calls: AtomicUsize,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E) -> Self {
        Self { inner, cache: Mutex::new(HashMap::new()), backend_calls: AtomicUsize::new(0) }
    }

    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, TextError> {
        if let Some(hit) = self.cache.lock().expect("cache lock poisoned").get(text) {
            return Ok(hit.clone());
        }
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let vector = self.inner.embed(text)?;
        self.cache
            .lock()
            .expect("cache lock poisoned")
            .insert(text.to_string(), vector.clone());
        Ok(vector)
    }

    fn id(&self) -> String {
        self.inner.id()
    }
}
