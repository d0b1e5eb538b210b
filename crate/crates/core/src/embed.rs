//! Embedding vectors and the embedding-provider contract.
//!
//! The built-in reference embedder is a deterministic feature-hashed
//! bag-of-words (FNV-1a over lowercased word tokens, signed hashing,
//! d = 256 by default, L2-normalized) so the entire pipeline and test
//! suite run offline. External embedding services plug in behind the
//! same [`Embedder`] trait.

use crate::corpus::CorpusError;
use crate::scalar::Scalar;

pub const DEFAULT_DIM: usize = 256;

/// A fixed-dimension, L2-normalized embedding. Constructed only through
/// [`EmbeddingVector::normalized`] so the unit-norm invariant always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> EmbeddingVector<S> {
    /// Normalize raw values to unit L2 norm. A zero vector falls back to
    /// the first basis vector so every embedding stays unit-norm.
    pub fn normalized(mut values: Vec<S>) -> Self {
        let norm = values
            .iter()
            .map(|v| *v * *v)
            .fold(S::zero(), |a, b| a + b)
            .sqrt();
        if norm == S::zero() {
            for v in values.iter_mut() {
                *v = S::zero();
            }
            if !values.is_empty() {
                values[0] = S::one();
            }
        } else {
            for v in values.iter_mut() {
                *v = *v / norm;
            }
        }
        EmbeddingVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn dot(&self, other: &Self) -> S {
        debug_assert_eq!(self.dim(), other.dim());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| *a * *b)
            .fold(S::zero(), |a, b| a + b)
    }

    /// Cosine similarity; identical to `dot` for unit-norm vectors.
    pub fn cosine(&self, other: &Self) -> S {
        let denom = self.norm() * other.norm();
        if denom == S::zero() {
            return S::zero();
        }
        self.dot(other) / denom
    }

    pub fn norm(&self) -> S {
        self.values
            .iter()
            .map(|v| *v * *v)
            .fold(S::zero(), |a, b| a + b)
            .sqrt()
    }
}

/// Text-to-vector provider. Implementations must be deterministic:
/// identical input text yields an identical vector.
pub trait Embedder<S: Scalar>: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector<S>, CorpusError>;
    /// Stable identifier recorded in embedding cache files.
    fn id(&self) -> &str;
}

/// FNV-1a 64-bit, fixed here (rather than `DefaultHasher`) so embeddings
/// are stable across platforms and compiler versions.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic signed feature-hashing bag-of-words embedder.
#[derive(Debug, Clone)]
pub struct HashedBowEmbedder {
    dim: usize,
}

impl HashedBowEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashedBowEmbedder { dim }
    }

    fn bow_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|s| !s.is_empty())
            .map(|s| s.to_lowercase())
    }
}

impl Default for HashedBowEmbedder {
    fn default() -> Self {
        HashedBowEmbedder::new(DEFAULT_DIM)
    }
}

impl<S: Scalar> Embedder<S> for HashedBowEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<S>, CorpusError> {
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText("<query>".into()));
        }
        // integer accumulation keeps the pre-normalization counts exact
        let mut counts = vec![0i64; self.dim];
        for token in Self::bow_tokens(text) {
            let h = fnv1a64(token.as_bytes());
            let sign = if h & 1 == 0 { 1 } else { -1 };
            let bucket = ((h >> 1) % self.dim as u64) as usize;
            counts[bucket] += sign;
        }
        let values = counts
            .into_iter()
            .map(|c| S::from_i64(c).unwrap_or_else(|| S::from_f64(c as f64).unwrap()))
            .collect();
        Ok(EmbeddingVector::normalized(values))
    }

    fn id(&self) -> &str {
        "hashed-bow-v1"
    }
}
