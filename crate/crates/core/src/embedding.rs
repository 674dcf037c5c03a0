//! Text-to-unit-vector contract plus similarity math.
//!
//! Two providers implement [`Embedder`]: [`RemoteEmbedder`] posts text
//! batches to any sentence-embedding HTTP endpoint, and
//! [`HashedTokenEmbedder`] is a fully deterministic offline embedder (a bag
//! of token hashes projected onto a fixed dimension, then normalized) that
//! preserves enough similarity structure for clustering tests: texts sharing
//! tokens land closer than texts sharing none.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default vector width; matches common sentence-embedding model outputs so
/// remote and offline providers are interchangeable in shape.
pub const DEFAULT_DIM: usize = 384;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero-norm vector cannot be normalized")]
    ZeroNorm,
    #[error("embedding provider failed: {0}")]
    Provider(String),
}

/// A unit-norm vector of fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    vector: Vec<f64>,
}

impl Embedding {
    /// Normalize `vector` to unit Euclidean norm.
    pub fn unit(mut vector: Vec<f64>) -> Result<Self, EmbedError> {
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(EmbedError::ZeroNorm);
        }
        for x in &mut vector {
            *x /= norm;
        }
        Ok(Embedding { vector })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vector
    }
}

/// Cosine similarity of two unit vectors: their dot product, clamped to
/// `[-1, 1]` against floating-point drift.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let dot: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// Deterministic text-to-unit-vector provider. Same text, same vector.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        (**self).embed(text)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

/// Offline embedder: lowercase alphanumeric tokens, FNV-1a hash each token
/// into one of `dim` buckets, count occurrences, L2-normalize.
pub struct HashedTokenEmbedder {
    dim: usize,
}

impl Default for HashedTokenEmbedder {
    fn default() -> Self {
        HashedTokenEmbedder { dim: DEFAULT_DIM }
    }
}

impl HashedTokenEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashedTokenEmbedder { dim }
    }
}

// FNV-1a, fixed here so vectors are stable across platforms and releases.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub(crate) fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

impl Embedder for HashedTokenEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut vector = vec![0.0f64; self.dim];
        for token in &tokens {
            let bucket = (fnv1a(token.as_bytes()) % self.dim as u64) as usize;
            vector[bucket] += 1.0;
        }
        Embedding::unit(vector)
    }
}

/// HTTP provider: POSTs `{"model": .., "texts": [..]}` and expects
/// `{"embeddings": [[f64; dim], ..]}` back.
pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    dim: usize,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, dim: usize) -> Self {
        RemoteEmbedder {
            endpoint: endpoint.into(),
            model: model.into(),
            dim,
            agent: ureq::Agent::new_with_defaults(),
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        self.embed_batch(&[text]).map(|mut v| v.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        for text in texts {
            if text.trim().is_empty() {
                return Err(EmbedError::EmptyText);
            }
        }
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let request = EmbedRequest {
            model: &self.model,
            texts,
        };
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(&request)
            .map_err(|e| EmbedError::Provider(e.to_string()))?;
        let parsed: EmbedResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::Provider(e.to_string()))?;
        if parsed.embeddings.len() != texts.len() {
            return Err(EmbedError::Provider(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                parsed.embeddings.len()
            )));
        }
        parsed
            .embeddings
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(EmbedError::DimensionMismatch {
                        left: self.dim,
                        right: v.len(),
                    });
                }
                Embedding::unit(v)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn embed_is_deterministic() {
        let embedder = HashedTokenEmbedder::default();
        let a = embedder.embed("boeing raises delivery forecast").unwrap();
        let b = embedder.embed("boeing raises delivery forecast").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn embed_rejects_empty_text() {
        let embedder = HashedTokenEmbedder::default();
        assert!(matches!(embedder.embed("   "), Err(EmbedError::EmptyText)));
        assert!(matches!(embedder.embed("..."), Err(EmbedError::EmptyText)));
    }

    #[test]
    fn token_overlap_orders_similarity() {
        let embedder = HashedTokenEmbedder::default();
        let a = embedder.embed("boeing 737 delay").unwrap();
        let b = embedder.embed("737 delivery delay").unwrap();
        let c = embedder.embed("dividend announcement").unwrap();
        let sim_ab = cosine_similarity(&a, &b).unwrap();
        let sim_ac = cosine_similarity(&a, &c).unwrap();
        assert!(sim_ab > sim_ac, "{sim_ab} vs {sim_ac}");
    }

    #[test]
    fn embeddings_are_unit_norm() {
        let embedder = HashedTokenEmbedder::default();
        let e = embedder.embed("a week of mixed market news").unwrap();
        let norm: f64 = e.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert_eq!(e.dim(), DEFAULT_DIM);
    }

    #[test]
    fn cosine_hand_cases() {
        let v = Embedding::unit(vec![0.3, 0.4]).unwrap();
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-9);
        let x = Embedding::unit(vec![1.0, 0.0]).unwrap();
        let y = Embedding::unit(vec![0.0, 1.0]).unwrap();
        assert_eq!(cosine_similarity(&x, &y).unwrap(), 0.0);
        let a = Embedding::unit(vec![0.6, 0.8]).unwrap();
        let b = Embedding::unit(vec![0.8, 0.6]).unwrap();
        assert!((cosine_similarity(&a, &b).unwrap() - 0.96).abs() < 1e-12);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let a = Embedding::unit(vec![1.0, 0.0]).unwrap();
        let b = Embedding::unit(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            cosine_similarity(&a, &b),
            Err(EmbedError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_vector_rejected() {
        assert!(matches!(
            Embedding::unit(vec![0.0, 0.0]),
            Err(EmbedError::ZeroNorm)
        ));
    }

    proptest! {
        #[test]
        fn similarity_symmetric_and_bounded(
            xs in proptest::collection::vec(-5.0f64..5.0, 8),
            ys in proptest::collection::vec(-5.0f64..5.0, 8),
        ) {
            prop_assume!(xs.iter().any(|v| v.abs() > 1e-9));
            prop_assume!(ys.iter().any(|v| v.abs() > 1e-9));
            let a = Embedding::unit(xs).unwrap();
            let b = Embedding::unit(ys).unwrap();
            let ab = cosine_similarity(&a, &b).unwrap();
            let ba = cosine_similarity(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((-1.0..=1.0).contains(&ab));
            prop_assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        }
    }
}
