//! Model-backed providers: sentence embeddings and query/passage relevance.
//!
//! Two families live here. [`ShimClient`] talks JSON over HTTP to the local
//! model service (`POST /embed`, `POST /rerank`, `GET /healthz`).
//! [`HashingEmbedder`] is a deterministic offline embedder used when no
//! service is running and in tests.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text_index::tokenize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider returned {got} results for {expected} inputs")]
    CardinalityMismatch { expected: usize, got: usize },
    #[error("provider rejected request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    BadResponse(String),
}

/// Maps texts to real vectors of a shared dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError>;
}

/// Scores candidate texts against a query; higher is more relevant.
pub trait RelevanceScorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>, ProviderError>;
}

/// Feature-hashing bag of words and character trigrams, L2-normalized.
///
/// Not a semantic model, but deterministic across platforms and good enough
/// for lexical-overlap style similarity when the model service is absent.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f64; self.dim];
        let mut add = |feature: &str, weight: f64| {
            let h = fnv1a(feature.as_bytes());
            let slot = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
            v[slot] += sign * weight;
        };
        for token in tokenize(text) {
            add(&token, 1.0);
            let padded: Vec<char> = format!("#{token}#").chars().collect();
            for w in padded.windows(3) {
                add(&w.iter().collect::<String>(), 0.25);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            let mut e = vec![0f32; self.dim];
            e[0] = 1.0;
            return e;
        }
        v.into_iter().map(|x| (x / norm) as f32).collect()
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn name(&self) -> &str {
        "hashing"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Cosine similarity of two equal-length vectors, accumulated in f64.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

#[derive(Debug, Serialize)]
struct RerankRequest<'a> {
    query: &'a str,
    candidates: &'a [String],
}

#[derive(Debug, Deserialize)]
struct RerankResponse {
    scores: Vec<f64>,
}

/// `GET /healthz` payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShimHealth {
    pub embed_model: String,
    pub rerank_model: String,
    pub dimension: usize,
}

/// HTTP client for the local embedding/reranking service.
#[derive(Debug, Clone)]
pub struct ShimClient {
    base_url: String,
    batch_cap: usize,
    agent: ureq::Agent,
}

impl ShimClient {
    pub const DEFAULT_BATCH_CAP: usize = 64;

    pub fn new(base_url: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            batch_cap: Self::DEFAULT_BATCH_CAP,
            agent,
        }
    }

    pub fn with_batch_cap(mut self, cap: usize) -> Self {
        self.batch_cap = cap.max(1);
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn health(&self) -> Result<ShimHealth, ProviderError> {
        let url = format!("{}/healthz", self.base_url);
        let resp = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        read_json(resp)
    }

    fn post<Req: Serialize, Resp: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, ProviderError> {
        let url = format!("{}{path}", self.base_url);
        let resp = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        read_json(resp)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(
    mut resp: ureq::http::Response<ureq::Body>,
) -> Result<T, ProviderError> {
    let status = resp.status().as_u16();
    if status == 503 {
        return Err(ProviderError::Unavailable("model service is loading (503)".into()));
    }
    if !(200..300).contains(&status) {
        let body = resp.body_mut().read_to_string().unwrap_or_default();
        return Err(ProviderError::Rejected { status, body });
    }
    resp.body_mut()
        .read_json()
        .map_err(|e| ProviderError::BadResponse(e.to_string()))
}

impl EmbeddingProvider for ShimClient {
    fn name(&self) -> &str {
        "shim"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_cap) {
            let resp: EmbedResponse = self.post("/embed", &EmbedRequest { texts: chunk })?;
            if resp.vectors.len() != chunk.len() {
                return Err(ProviderError::CardinalityMismatch {
                    expected: chunk.len(),
                    got: resp.vectors.len(),
                });
            }
            out.extend(resp.vectors);
        }
        Ok(out)
    }
}

impl RelevanceScorer for ShimClient {
    fn name(&self) -> &str {
        "shim"
    }

    fn score(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>, ProviderError> {
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let resp: RerankResponse = self.post("/rerank", &RerankRequest { query, candidates })?;
        if resp.scores.len() != candidates.len() {
            return Err(ProviderError::CardinalityMismatch {
                expected: candidates.len(),
                got: resp.scores.len(),
            });
        }
        Ok(resp.scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashing_embedder_is_unit_norm_and_deterministic() {
        let e = HashingEmbedder::default();
        let texts = vec!["Where was David Resnick born?".to_string(), String::new()];
        let a = e.embed(&texts).unwrap();
        let b = e.embed(&texts).unwrap();
        assert_eq!(a, b);
        for v in &a {
            assert_eq!(v.len(), HashingEmbedder::DEFAULT_DIM);
            let norm: f64 = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn cosine_bounds() {
        assert!((cosine(&[1.0, 0.0], &[1.0, 0.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine(&[1.0, 0.0], &[-2.0, 0.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn unreachable_shim_is_unavailable() {
        // port 9 (discard) is essentially never served in the sandbox
        let client = ShimClient::new("http://127.0.0.1:9");
        let err = client.embed(&["x".to_string()]).unwrap_err();
        assert!(matches!(err, ProviderError::Unavailable(_)), "{err}");
    }
}
