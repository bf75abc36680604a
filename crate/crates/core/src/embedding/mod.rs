//! Semantic embeddings and their softmax distributions.
//!
//! Embeddings come from an [`EmbeddingProvider`]: either a remote embedding
//! server or the deterministic hashed n-gram [`FallbackEmbedder`]. Every
//! embedding is turned into a [`Distribution`] over its dimensions with a
//! temperature-scaled softmax, which is what the divergence math consumes.

mod fallback;
mod remote;

pub use fallback::{fallback_embed, FallbackEmbedder, NGRAM_BUCKETS};
pub use remote::{RemoteEmbedder, RetryPolicy};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DIMENSION: usize = 512;
pub const DEFAULT_BATCH_SIZE: usize = 64;
/// Smallest probability any distribution entry may take.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("bad provider response: {0}")]
    BadResponse(String),
    #[error("invalid embedder config: {0}")]
    InvalidConfig(String),
    #[error("non-finite embedding value at index {0}")]
    NonFinite(usize),
}

/// A fixed-dimension, finite embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn zeros(dimension: usize) -> Self {
        Self(vec![0.0; dimension])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Probability vector: every entry in `[PROB_FLOOR, 1]`, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Normalizes non-negative weights, flooring entries at [`PROB_FLOOR`].
    ///
    /// Floored entries are pinned to exactly the floor and the remaining mass
    /// is shared among the others in proportion to their weights, so the
    /// floor still holds after normalization. Returns `None` when the weights
    /// are empty, negative, non-finite or sum to zero.
    pub fn from_weights(weights: &[f64]) -> Option<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return None;
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return None;
        }
        let d = weights.len();
        let mut floored = vec![false; d];
        loop {
            let n_floored = floored.iter().filter(|f| **f).count();
            let free_mass = 1.0 - n_floored as f64 * PROB_FLOOR;
            let free_weight: f64 = weights
                .iter()
                .zip(&floored)
                .filter(|(_, f)| !**f)
                .map(|(w, _)| *w)
                .sum();
            let scale = free_mass / free_weight;
            let mut changed = false;
            for (w, f) in weights.iter().zip(floored.iter_mut()) {
                if !*f && w * scale < PROB_FLOOR {
                    *f = true;
                    changed = true;
                }
            }
            if !changed {
                let probs = weights
                    .iter()
                    .zip(&floored)
                    .map(|(w, f)| if *f { PROB_FLOOR } else { w * scale })
                    .collect();
                return Some(Self(probs));
            }
        }
    }

    /// Wraps an existing probability vector after checking the invariants
    /// (floor, upper bound, unit sum within 1e-9).
    pub fn from_probs(probs: Vec<f64>) -> Option<Self> {
        let ok = !probs.is_empty()
            && probs
                .iter()
                .all(|p| p.is_finite() && *p >= PROB_FLOOR && *p <= 1.0)
            && (probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        ok.then_some(Self(probs))
    }

    pub fn uniform(dimension: usize) -> Self {
        Self(vec![1.0 / dimension as f64; dimension])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }
}

impl AsRef<[f64]> for Distribution {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Temperature-scaled softmax with max subtraction, floored and renormalized.
///
/// # Panics
/// If `temperature` is not strictly positive or the embedding is empty.
pub fn to_distribution(e: &Embedding, temperature: f64) -> Distribution {
    assert!(temperature > 0.0, "temperature must be positive");
    assert!(e.dimension() > 0, "empty embedding");
    let max = e.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = e
        .values()
        .iter()
        .map(|v| ((v - max) / temperature).exp())
        .collect();
    // the arg-max entry contributes exp(0) = 1, so the sum is never zero
    Distribution::from_weights(&weights).expect("softmax weights are positive")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Remote,
    #[default]
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub provider: ProviderKind,
    /// Remote only.
    pub endpoint: Option<String>,
    pub batch_size: usize,
    pub dimension: usize,
    /// Fallback only. The pipeline overrides this with a derived stage seed.
    pub seed: u64,
    pub temperature: f64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Fallback,
            endpoint: None,
            batch_size: DEFAULT_BATCH_SIZE,
            dimension: DEFAULT_DIMENSION,
            seed: 0,
            temperature: 1.0,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |m: &str| Err(EmbeddingError::InvalidConfig(m.to_owned()));
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1");
        }
        if self.dimension < 2 {
            return bad("dimension must be >= 2");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a positive finite number");
        }
        if self.provider == ProviderKind::Remote && self.endpoint.is_none() {
            return bad("remote provider requires an endpoint");
        }
        Ok(())
    }

    pub fn provider(&self) -> Result<Box<dyn EmbeddingProvider>, EmbeddingError> {
        self.validate()?;
        Ok(match self.provider {
            ProviderKind::Fallback => Box::new(FallbackEmbedder::new(self.dimension, self.seed)),
            ProviderKind::Remote => Box::new(RemoteEmbedder::new(
                self.endpoint.clone().unwrap_or_default(),
                self.dimension,
                self.batch_size,
            )),
        })
    }
}

/// Source of fixed-dimension embeddings. Implementations must return exactly
/// one embedding per text, in input order.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError>;
}

/// Embeds `texts` with the provider described by `config`.
pub fn embed_batch<S: AsRef<str>>(
    texts: &[S],
    config: &EmbedderConfig,
) -> Result<Vec<Embedding>, EmbeddingError> {
    let provider = config.provider()?;
    let refs: Vec<&str> = texts.iter().map(AsRef::as_ref).collect();
    let out = provider.embed(&refs)?;
    if let Some(bad) = out.iter().find(|e| e.dimension() != config.dimension) {
        return Err(EmbeddingError::DimensionMismatch {
            expected: config.dimension,
            actual: bad.dimension(),
        });
    }
    Ok(out)
}
