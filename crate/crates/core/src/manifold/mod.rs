//! 2-D t-SNE projection of per-community embedding matrices.
//!
//! Gaussian input affinities are calibrated per row to a target perplexity,
//! symmetrized into a joint distribution, and matched by a Student-t
//! distribution over the output coordinates using momentum gradient descent
//! with per-parameter gains and early exaggeration. The repulsive term is
//! either exact or approximated by a Barnes-Hut quadtree.

mod affinity;
mod gradient;
mod quadtree;

pub use affinity::{
    calibrate_row, conditional_affinities, pairwise_squared_distances, symmetrize_affinities,
    JointAffinities, JOINT_FLOOR,
};
pub use gradient::{kl_objective, tsne_gradient, tsne_gradient_scaled, GradientMethod};
pub use quadtree::QuadTree;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bisection tolerance on row entropy (nats).
pub const PERPLEXITY_TOL: f64 = 1e-5;
pub const PERPLEXITY_MAX_ITER: usize = 50;
/// The objective is recorded after every this many iterations.
pub const TRACE_INTERVAL: usize = 50;
/// Above this many points `Auto` switches to Barnes-Hut.
pub const EXACT_MAX_POINTS: usize = 5000;
pub const MIN_POINTS: usize = 4;
const INIT_STD: f64 = 1e-4;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum ManifoldError {
    #[error("too few points: {n} (need at least {min})")]
    TooFewPoints { n: usize, min: usize },
    #[error("invalid t-SNE parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TsneAlgorithm {
    Exact,
    BarnesHut,
    /// Exact up to [`EXACT_MAX_POINTS`], Barnes-Hut beyond.
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneParams {
    pub perplexity: f64,
    pub learning_rate: f64,
    pub n_iter: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iter: usize,
    pub seed: u64,
    pub algorithm: TsneAlgorithm,
    pub theta: f64,
    /// L2-normalize input rows before computing distances.
    pub normalize_input: bool,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            learning_rate: 200.0,
            n_iter: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            seed: 0,
            algorithm: TsneAlgorithm::Auto,
            theta: 0.5,
            normalize_input: true,
        }
    }
}

impl TsneParams {
    pub fn validate(&self) -> Result<(), ManifoldError> {
        let bad = |m: String| Err(ManifoldError::InvalidParams(m));
        if self.perplexity.is_nan() || self.perplexity <= 0.0 {
            return bad(format!(
                "perplexity must be positive, got {}",
                self.perplexity
            ));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.early_exaggeration.is_nan() || self.early_exaggeration <= 0.0 {
            return bad("early_exaggeration must be positive".into());
        }
        if self.n_iter == 0 || self.n_iter < self.exaggeration_iters {
            return bad(format!(
                "n_iter ({}) must be positive and >= exaggeration_iters ({})",
                self.n_iter, self.exaggeration_iters
            ));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [0, 1], got {}", self.theta));
        }
        Ok(())
    }

    /// Perplexity clamped to `(n − 1) / 3`.
    pub fn effective_perplexity(&self, n: usize) -> f64 {
        self.perplexity.min((n as f64 - 1.0) / 3.0)
    }

    pub fn resolved_algorithm(&self, n: usize) -> TsneAlgorithm {
        match self.algorithm {
            TsneAlgorithm::Auto if n > EXACT_MAX_POINTS => TsneAlgorithm::BarnesHut,
            TsneAlgorithm::Auto => TsneAlgorithm::Exact,
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub post_id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneOutput {
    /// N×2 coordinates in input row order.
    pub coords: Array2<f64>,
    /// `KL(P ‖ Q)` after iterations 50, 100, … (see [`TRACE_INTERVAL`]).
    pub objective_trace: Vec<f64>,
}

impl TsneOutput {
    pub fn points<S: AsRef<str>>(&self, ids: &[S]) -> Vec<ProjectedPoint> {
        assert_eq!(ids.len(), self.coords.nrows(), "one id per row");
        ids.iter()
            .zip(self.coords.rows())
            .map(|(id, r)| ProjectedPoint {
                post_id: id.as_ref().to_owned(),
                x: r[0],
                y: r[1],
            })
            .collect()
    }
}

pub fn l2_normalize_rows(x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    out
}

/// Projects the rows of `embeddings` to 2-D. Deterministic for a given seed.
pub fn tsne_embed(
    embeddings: ArrayView2<f64>,
    params: &TsneParams,
) -> Result<TsneOutput, ManifoldError> {
    params.validate()?;
    let n = embeddings.nrows();
    if n < MIN_POINTS {
        return Err(ManifoldError::TooFewPoints { n, min: MIN_POINTS });
    }
    let x = if params.normalize_input {
        l2_normalize_rows(embeddings)
    } else {
        embeddings.to_owned()
    };
    let perplexity = params.effective_perplexity(n);

    let (p, method) = match params.resolved_algorithm(n) {
        TsneAlgorithm::BarnesHut => {
            let k = ((3.0 * perplexity).floor() as usize).max(1);
            let p = JointAffinities::from_knn(
                x.view(),
                perplexity,
                k,
                PERPLEXITY_TOL,
                PERPLEXITY_MAX_ITER,
            )?;
            (
                p,
                GradientMethod::BarnesHut {
                    theta: params.theta,
                },
            )
        }
        _ => {
            let d = pairwise_squared_distances(x.view())?;
            let cond = conditional_affinities(&d, perplexity, PERPLEXITY_TOL, PERPLEXITY_MAX_ITER)?;
            drop(d);
            let joint = symmetrize_affinities(&cond);
            (JointAffinities::from_dense(&joint), GradientMethod::Exact)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut y = Array2::from_shape_fn((n, 2), |_| normal.sample(&mut rng));
    let mut update = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    let mut trace = Vec::with_capacity(params.n_iter / TRACE_INTERVAL);

    for iter in 0..params.n_iter {
        let exaggeration = if iter < params.exaggeration_iters {
            params.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < params.momentum_switch_iter {
            params.initial_momentum
        } else {
            params.final_momentum
        };
        let grad = tsne_gradient_scaled(&p, &y, method, exaggeration);

        ndarray::Zip::from(&mut gains)
            .and(&grad)
            .and(&update)
            .for_each(|g, &dy, &u| {
                *g = if (dy > 0.0) != (u > 0.0) {
                    *g + 0.2
                } else {
                    *g * 0.8
                };
                *g = g.max(MIN_GAIN);
            });
        ndarray::Zip::from(&mut update)
            .and(&gains)
            .and(&grad)
            .for_each(|u, &g, &dy| *u = momentum * *u - params.learning_rate * g * dy);
        y += &update;
        let mean = y.mean_axis(Axis(0)).expect("n > 0");
        y -= &mean;

        if (iter + 1) % TRACE_INTERVAL == 0 {
            trace.push(kl_objective(&p, &y, method));
        }
    }

    Ok(TsneOutput {
        coords: y,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    fn quick() -> TsneParams {
        TsneParams {
            n_iter: 300,
            exaggeration_iters: 100,
            momentum_switch_iter: 100,
            seed: 17,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let x = random(40, 8, 1);
        let a = tsne_embed(x.view(), &quick()).unwrap();
        let b = tsne_embed(x.view(), &quick()).unwrap();
        assert_eq!(a, b);
        let other = tsne_embed(
            x.view(),
            &TsneParams {
                seed: 18,
                ..quick()
            },
        )
        .unwrap();
        assert_ne!(a.coords, other.coords);
    }

    #[test]
    fn trace_is_sampled_every_interval() {
        let out = tsne_embed(random(20, 4, 2).view(), &quick()).unwrap();
        assert_eq!(out.objective_trace.len(), 300 / TRACE_INTERVAL);
        assert!(out.objective_trace.iter().all(|v| *v >= 0.0));
        assert!(out.coords.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn too_few_points_rejected() {
        assert_eq!(
            tsne_embed(random(3, 4, 0).view(), &TsneParams::default()),
            Err(ManifoldError::TooFewPoints { n: 3, min: 4 })
        );
    }

    #[test]
    fn four_points_clamp_perplexity() {
        let params = TsneParams::default();
        assert_eq!(params.effective_perplexity(4), 1.0);
        let out = tsne_embed(random(4, 3, 3).view(), &quick()).unwrap();
        assert_eq!(out.coords.nrows(), 4);
    }

    #[test]
    fn param_validation() {
        let bad = [
            TsneParams {
                n_iter: 100,
                ..Default::default()
            },
            TsneParams {
                theta: 1.5,
                ..Default::default()
            },
            TsneParams {
                perplexity: 0.0,
                ..Default::default()
            },
            TsneParams {
                learning_rate: -1.0,
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(matches!(p.validate(), Err(ManifoldError::InvalidParams(_))));
        }
    }

    #[test]
    fn auto_switches_above_threshold() {
        let p = TsneParams::default();
        assert_eq!(p.resolved_algorithm(EXACT_MAX_POINTS), TsneAlgorithm::Exact);
        assert_eq!(
            p.resolved_algorithm(EXACT_MAX_POINTS + 1),
            TsneAlgorithm::BarnesHut
        );
    }

    #[test]
    fn barnes_hut_path_runs() {
        let params = TsneParams {
            algorithm: TsneAlgorithm::BarnesHut,
            ..quick()
        };
        let out = tsne_embed(random(80, 6, 4).view(), &params).unwrap();
        assert!(out.coords.iter().all(|v| v.is_finite()));
        let last = *out.objective_trace.last().unwrap();
        assert!(last < out.objective_trace[1]);
    }

    #[test]
    fn zero_rows_survive_normalization() {
        let mut x = random(10, 4, 5);
        x.row_mut(3).fill(0.0);
        let n = l2_normalize_rows(x.view());
        assert!(n.row(3).iter().all(|v| *v == 0.0));
        assert!((n.row(0).dot(&n.row(0)) - 1.0).abs() < 1e-12);
    }
}
