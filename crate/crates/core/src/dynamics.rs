//! Novelty, transience and resonance over a timeline of distributions.
//!
//! For the post at index `t` and window size `n`:
//!
//! * novelty `N(t)` compares `p_t` with the `n` posts before it,
//! * transience `T(t)` compares `p_t` with the `n` posts after it,
//! * resonance `R(t) = N(t) - T(t)`.
//!
//! In [`WindowMode::MeanDistribution`] the window is first averaged into one
//! distribution and a single KL divergence is taken; in
//! [`WindowMode::MeanDivergence`] the KL divergences to each window member are
//! averaged. Posts without a full window get no value (no truncation).
//! All values are in nats.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Distribution;

pub const DEFAULT_WINDOW: usize = 25;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DynamicsError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty window")]
    EmptyWindow,
    #[error("empty timeline")]
    EmptyTimeline,
    #[error("window size must be >= 1")]
    InvalidWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// KL to the averaged window distribution.
    #[default]
    MeanDistribution,
    /// Average of KL to each window member.
    MeanDivergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub n: usize,
    pub mode: WindowMode,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            n: DEFAULT_WINDOW,
            mode: WindowMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRecord {
    pub post_id: String,
    pub novelty: Option<f64>,
    pub transience: Option<f64>,
    pub resonance: Option<f64>,
}

/// `Σ p_i ln(p_i / q_i)` in nats.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> Result<f64, DynamicsError> {
    if p.dimension() != q.dimension() {
        return Err(DynamicsError::DimensionMismatch(
            p.dimension(),
            q.dimension(),
        ));
    }
    Ok(kl_unchecked(p.probs(), q.probs()))
}

fn kl_unchecked(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(pi, qi)| pi * (pi / qi).ln()).sum()
}

/// Entrywise mean, floored and renormalized.
pub fn mean_distribution(ds: &[&Distribution]) -> Result<Distribution, DynamicsError> {
    let first = ds.first().ok_or(DynamicsError::EmptyWindow)?;
    let d = first.dimension();
    let mut acc = vec![0.0; d];
    for dist in ds {
        if dist.dimension() != d {
            return Err(DynamicsError::DimensionMismatch(d, dist.dimension()));
        }
        for (a, p) in acc.iter_mut().zip(dist.probs()) {
            *a += p;
        }
    }
    let k = ds.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(Distribution::from_weights(&acc).expect("mean of distributions is a valid weight vector"))
}

fn window_divergence(
    target: &Distribution,
    window: &[&Distribution],
    mode: WindowMode,
) -> Result<f64, DynamicsError> {
    match mode {
        WindowMode::MeanDistribution => kl_divergence(target, &mean_distribution(window)?),
        WindowMode::MeanDivergence => {
            let mut total = 0.0;
            for q in window {
                total += kl_divergence(target, q)?;
            }
            Ok(total / window.len() as f64)
        }
    }
}

/// Computes one record per input post, in input order.
///
/// Windows are always walked outward from `t` (nearest neighbour first), so
/// reversing the sequence reproduces the same arithmetic with novelty and
/// transience swapped.
pub fn compute_dynamics<S: AsRef<str> + Sync>(
    timeline: &[(S, Distribution)],
    config: &WindowConfig,
) -> Result<Vec<DynamicsRecord>, DynamicsError> {
    if timeline.is_empty() {
        return Err(DynamicsError::EmptyTimeline);
    }
    if config.n == 0 {
        return Err(DynamicsError::InvalidWindow);
    }
    let dim = timeline[0].1.dimension();
    if let Some((_, d)) = timeline.iter().find(|(_, d)| d.dimension() != dim) {
        return Err(DynamicsError::DimensionMismatch(dim, d.dimension()));
    }
    let n = config.n;
    let len = timeline.len();

    (0..len)
        .into_par_iter()
        .map(|t| {
            let target = &timeline[t].1;
            let novelty = if t >= n {
                let past: Vec<&Distribution> = (1..=n).map(|j| &timeline[t - j].1).collect();
                Some(window_divergence(target, &past, config.mode)?)
            } else {
                None
            };
            let transience = if t + n < len {
                let future: Vec<&Distribution> = (1..=n).map(|j| &timeline[t + j].1).collect();
                Some(window_divergence(target, &future, config.mode)?)
            } else {
                None
            };
            let resonance = match (novelty, transience) {
                (Some(nv), Some(tr)) => Some(nv - tr),
                _ => None,
            };
            Ok(DynamicsRecord {
                post_id: timeline[t].0.as_ref().to_owned(),
                novelty,
                transience,
                resonance,
            })
        })
        .collect()
}
