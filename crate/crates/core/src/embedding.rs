//! Embedding vectors, cosine similarity, and embedding providers.
//!
//! Two providers ship: [`HashingEmbedder`], a deterministic feature-hashing
//! bag-of-words model that needs no network, and [`RemoteEmbedder`], which
//! calls an HTTP embedding endpoint. All produced vectors are L2-normalized,
//! except the zero vector returned for text without tokens.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::HttpClient;
use crate::scalar::Scalar;
use crate::tokenize::{fnv1a64, tokenize};

pub const DEFAULT_HASHING_DIM: usize = 256;
pub const MIN_DIM: usize = 8;
pub const DEFAULT_EMBEDDING_KEY_ENV: &str = "HRAG_EMBEDDING_API_KEY";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed embedding response: {0}")]
    BadResponse(String),
    #[error("invalid embedding provider config: {0}")]
    InvalidConfig(String),
    #[error("nothing to embed")]
    EmptyInput,
}

impl EmbeddingError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbeddingError::Transport { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { values: vec![T::zero(); dim] }
    }

    /// Scales to unit L2 norm; the zero vector is returned unchanged.
    pub fn normalized(values: Vec<T>) -> Self {
        let norm = values
            .iter()
            .map(|v| {
                let v = v.to_f64_lossy();
                v * v
            })
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return Self { values };
        }
        Self {
            values: values
                .into_iter()
                .map(|v| T::lit(v.to_f64_lossy() / norm))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }
}

/// Cosine similarity in `[-1, 1]`; `0` when either side is the zero vector.
pub fn cosine<T: Scalar>(a: &EmbeddingVector<T>, b: &EmbeddingVector<T>) -> Result<T, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let (mut dot, mut na, mut nb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.values.iter().zip(&b.values) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na.is_zero() || nb.is_zero() {
        return Ok(T::zero());
    }
    let sim = dot / (na.sqrt() * nb.sqrt());
    Ok(sim.max(-T::one()).min(T::one()))
}

/// Produces one embedding per input text, in input order.
pub trait Embedder<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<T>>, EmbeddingError>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector<T>, EmbeddingError> {
        let mut out = self.embed(&[text])?;
        out.pop().ok_or_else(|| EmbeddingError::BadResponse("empty batch".into()))
    }
}

/// Signed feature hashing over lowercase alphanumeric tokens.
///
/// Each token is hashed with FNV-1a 64; the bucket is `hash % dim` and the
/// sign is negative when bit 63 is set. Counts accumulate per bucket and the
/// result is L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbeddingError> {
        if dim < MIN_DIM {
            return Err(EmbeddingError::InvalidConfig(format!("dim {dim} below minimum {MIN_DIM}")));
        }
        Ok(Self { dim })
    }

    pub fn embed_text<T: Scalar>(&self, text: &str) -> EmbeddingVector<T> {
        let mut counts = vec![0f64; self.dim];
        for token in tokenize(text) {
            let hash = fnv1a64(token.as_bytes());
            let bucket = (hash % self.dim as u64) as usize;
            counts[bucket] += if hash >> 63 == 1 { -1.0 } else { 1.0 };
        }
        EmbeddingVector::normalized(counts.into_iter().map(T::lit).collect())
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_HASHING_DIM }
    }
}

impl<T: Scalar> Embedder<T> for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<T>>, EmbeddingError> {
        if texts.is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingProviderConfig {
    Hashing {
        #[serde(default = "default_hashing_dim")]
        dim: usize,
    },
    Remote {
        endpoint: String,
        model: String,
        dim: usize,
        /// Name of the environment variable holding the bearer token.
        #[serde(default = "default_key_env")]
        api_key_env: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default = "default_attempts")]
        max_attempts: u32,
        #[serde(default = "default_batch")]
        batch_size: usize,
    },
}

fn default_hashing_dim() -> usize {
    DEFAULT_HASHING_DIM
}
fn default_key_env() -> String {
    DEFAULT_EMBEDDING_KEY_ENV.to_string()
}
fn default_timeout_secs() -> u64 {
    30
}
fn default_attempts() -> u32 {
    3
}
fn default_batch() -> usize {
    64
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        EmbeddingProviderConfig::Hashing { dim: DEFAULT_HASHING_DIM }
    }
}

impl EmbeddingProviderConfig {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProviderConfig::Hashing { dim } | EmbeddingProviderConfig::Remote { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dim() < MIN_DIM {
            return Err(EmbeddingError::InvalidConfig(format!(
                "dim {} below minimum {MIN_DIM}",
                self.dim()
            )));
        }
        if let EmbeddingProviderConfig::Remote { endpoint, model, batch_size, .. } = self {
            if endpoint.trim().is_empty() || model.trim().is_empty() {
                return Err(EmbeddingError::InvalidConfig(
                    "remote provider needs a non-empty endpoint and model".into(),
                ));
            }
            if *batch_size == 0 {
                return Err(EmbeddingError::InvalidConfig("batch_size must be >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn build<T: Scalar>(&self) -> Result<Arc<dyn Embedder<T>>, EmbeddingError> {
        self.validate()?;
        Ok(match self {
            EmbeddingProviderConfig::Hashing { dim } => Arc::new(HashingEmbedder::new(*dim)?),
            EmbeddingProviderConfig::Remote { .. } => Arc::new(RemoteEmbedder::from_config(self)?),
        })
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EmbedResponse {
    Plain { embeddings: Vec<Vec<f64>> },
    Items { data: Vec<EmbeddingItem> },
}

impl EmbedResponse {
    fn into_vectors(self) -> Vec<Vec<f64>> {
        match self {
            EmbedResponse::Plain { embeddings } => embeddings,
            EmbedResponse::Items { data } => data.into_iter().map(|i| i.embedding).collect(),
        }
    }
}

/// HTTP embedding provider.
///
/// Request body: `{"model": ..., "input": [texts]}`. Accepted responses:
/// `{"embeddings": [[f, ...], ...]}` or `{"data": [{"embedding": [...]}, ...]}`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    dim: usize,
    api_key: Option<String>,
    batch_size: usize,
    client: HttpClient,
}

impl RemoteEmbedder {
    pub fn from_config(config: &EmbeddingProviderConfig) -> Result<Self, EmbeddingError> {
        config.validate()?;
        let EmbeddingProviderConfig::Remote {
            endpoint,
            model,
            dim,
            api_key_env,
            timeout_secs,
            max_attempts,
            batch_size,
        } = config
        else {
            return Err(EmbeddingError::InvalidConfig("not a remote provider config".into()));
        };
        Ok(Self {
            endpoint: endpoint.clone(),
            model: model.clone(),
            dim: *dim,
            api_key: std::env::var(api_key_env).ok().filter(|k| !k.is_empty()),
            batch_size: *batch_size,
            client: HttpClient::new(Duration::from_secs(*timeout_secs), *max_attempts),
        })
    }
}

impl<T: Scalar> Embedder<T> for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<T>>, EmbeddingError> {
        if texts.is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch_size) {
            let request = EmbedRequest { model: &self.model, input: batch };
            let response: EmbedResponse = self
                .client
                .post_json(&self.endpoint, self.api_key.as_deref(), &request)
                .map_err(|f| {
                    if f.retryable {
                        EmbeddingError::Transport { attempts: f.attempts, message: f.message }
                    } else {
                        EmbeddingError::BadResponse(f.message)
                    }
                })?;
            let vectors = response.into_vectors();
            if vectors.len() != batch.len() {
                return Err(EmbeddingError::BadResponse(format!(
                    "expected {} vectors, got {}",
                    batch.len(),
                    vectors.len()
                )));
            }
            for v in vectors {
                if v.len() != self.dim {
                    return Err(EmbeddingError::DimensionMismatch { expected: self.dim, actual: v.len() });
                }
                out.push(EmbeddingVector::normalized(v.into_iter().map(T::lit).collect()));
            }
        }
        Ok(out)
    }
}
