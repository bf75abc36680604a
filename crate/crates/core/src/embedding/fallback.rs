use std::collections::BTreeMap;

use super::{Embedding, EmbeddingError, EmbeddingProvider};
use crate::hashing::{fnv1a, mix64, SplitMix64};

/// Number of hash buckets for character n-gram features (2^18).
pub const NGRAM_BUCKETS: u64 = 1 << 18;
const NGRAM_SIZES: [usize; 3] = [3, 4, 5];

/// Offline stand-in for a sentence encoder: hashed character 3/4/5-gram
/// counts, projected to `dimension` by a seeded sign-random projection and
/// L2-normalized. Texts without any n-gram map to the zero vector.
#[derive(Debug, Clone)]
pub struct FallbackEmbedder {
    dimension: usize,
    seed: u64,
}

impl FallbackEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension >= 2, "dimension must be >= 2");
        Self { dimension, seed }
    }
}

impl EmbeddingProvider for FallbackEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        Ok(texts
            .iter()
            .map(|t| fallback_embed(t, self.dimension, self.seed))
            .collect())
    }
}

fn ngram_counts(text: &str) -> BTreeMap<u64, f64> {
    let chars: Vec<char> = text.chars().collect();
    let mut counts = BTreeMap::new();
    let mut buf = String::new();
    for n in NGRAM_SIZES {
        for window in chars.windows(n) {
            buf.clear();
            buf.extend(window);
            let bucket = fnv1a(buf.as_bytes()) % NGRAM_BUCKETS;
            *counts.entry(bucket).or_insert(0.0) += 1.0;
        }
    }
    counts
}

pub fn fallback_embed(text: &str, dimension: usize, seed: u64) -> Embedding {
    assert!(dimension >= 2, "dimension must be >= 2");
    let counts = ngram_counts(text);
    let mut out = vec![0.0; dimension];
    let words = dimension.div_ceil(64);
    for (&bucket, &count) in &counts {
        // one independent sign stream per (seed, bucket)
        let mut signs = SplitMix64::new(mix64(seed ^ mix64(bucket.wrapping_add(1))));
        for w in 0..words {
            let bits = signs.next_u64();
            let lo = w * 64;
            for (k, slot) in out[lo..dimension.min(lo + 64)].iter_mut().enumerate() {
                if bits >> k & 1 == 1 {
                    *slot += count;
                } else {
                    *slot -= count;
                }
            }
        }
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    Embedding(out)
}
