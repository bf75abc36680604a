//! DBSCAN density clustering.
//!
//! Labels are `-1` for noise and `0, 1, …` for clusters, numbered in the
//! order their first core point appears in the input. Expansion follows input
//! order, so a border point reachable from several clusters joins the one
//! created first.

use std::collections::{HashMap, VecDeque};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NOISE: i64 = -1;

#[derive(Debug, Error, PartialEq)]
pub enum ClusteringError {
    #[error("index {idx} out of range for {n} points")]
    IndexOutOfRange { idx: usize, n: usize },
    #[error("invalid DBSCAN parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSpace {
    #[default]
    Projection2d,
    EmbeddingD,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
    pub space: ClusterSpace,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            eps: 0.25,
            min_pts: 10,
            space: ClusterSpace::Projection2d,
        }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<(), ClusteringError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(ClusteringError::InvalidParams(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.min_pts < 1 {
            return Err(ClusteringError::InvalidParams(
                "min_pts must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

fn sq_dist(points: ArrayView2<f64>, a: usize, b: usize) -> f64 {
    points
        .row(a)
        .iter()
        .zip(points.row(b).iter())
        .map(|(u, v)| (u - v) * (u - v))
        .sum()
}

/// Indices within Euclidean distance `eps` of `points[idx]`, itself
/// included, in ascending order.
pub fn region_query(
    points: ArrayView2<f64>,
    idx: usize,
    eps: f64,
) -> Result<Vec<usize>, ClusteringError> {
    let n = points.nrows();
    if idx >= n {
        return Err(ClusteringError::IndexOutOfRange { idx, n });
    }
    let eps2 = eps * eps;
    Ok((0..n)
        .filter(|&j| sq_dist(points, idx, j) <= eps2)
        .collect())
}

/// Uniform grid with cell side `eps`, used for 2-D neighbourhood queries.
struct Grid {
    cells: HashMap<(i64, i64), Vec<usize>>,
    eps: f64,
}

impl Grid {
    fn new(points: ArrayView2<f64>, eps: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for i in 0..points.nrows() {
            cells
                .entry(Self::cell(points[[i, 0]], points[[i, 1]], eps))
                .or_default()
                .push(i);
        }
        Self { cells, eps }
    }

    fn cell(x: f64, y: f64, eps: f64) -> (i64, i64) {
        ((x / eps).floor() as i64, (y / eps).floor() as i64)
    }

    fn neighbours(&self, points: ArrayView2<f64>, idx: usize) -> Vec<usize> {
        let (cx, cy) = Self::cell(points[[idx, 0]], points[[idx, 1]], self.eps);
        let eps2 = self.eps * self.eps;
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(members) = self.cells.get(&(cx + dx, cy + dy)) {
                    out.extend(
                        members
                            .iter()
                            .copied()
                            .filter(|&j| sq_dist(points, idx, j) <= eps2),
                    );
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Classic DBSCAN; core points have at least `min_pts` neighbours within
/// `eps`, counting themselves.
pub fn dbscan(points: ArrayView2<f64>, params: &DbscanParams) -> Result<Vec<i64>, ClusteringError> {
    params.validate()?;
    let n = points.nrows();
    let grid = (points.ncols() == 2 && points.iter().all(|v| v.is_finite()))
        .then(|| Grid::new(points, params.eps));
    let neighbours = |i: usize| -> Vec<usize> {
        match &grid {
            Some(g) => g.neighbours(points, i),
            None => region_query(points, i, params.eps).expect("index in range"),
        }
    };

    const UNVISITED: i64 = -2;
    let mut labels = vec![UNVISITED; n];
    let mut next_cluster = 0;
    for i in 0..n {
        if labels[i] != UNVISITED {
            continue;
        }
        let seeds = neighbours(i);
        if seeds.len() < params.min_pts {
            labels[i] = NOISE;
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[i] = cluster;
        let mut queue: VecDeque<usize> = seeds.into_iter().filter(|&j| j != i).collect();
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                // border point
                labels[j] = cluster;
                continue;
            }
            if labels[j] != UNVISITED {
                continue;
            }
            labels[j] = cluster;
            let reach = neighbours(j);
            if reach.len() >= params.min_pts {
                queue.extend(
                    reach
                        .into_iter()
                        .filter(|&k| labels[k] == UNVISITED || labels[k] == NOISE),
                );
            }
        }
    }
    Ok(labels)
}

/// Zero mean and unit variance per column; constant columns are only centred.
pub fn standardize_columns(points: ArrayView2<f64>) -> Array2<f64> {
    let mut out = points.to_owned();
    let n = out.nrows() as f64;
    if n == 0.0 {
        return out;
    }
    for mut col in out.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        col.mapv_inplace(|v| (v - mean) / scale);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn params(eps: f64, min_pts: usize) -> DbscanParams {
        DbscanParams {
            eps,
            min_pts,
            space: ClusterSpace::Projection2d,
        }
    }

    #[test]
    fn region_query_includes_self() {
        let p = array![[3.0, 4.0]];
        assert_eq!(region_query(p.view(), 0, 0.1).unwrap(), vec![0]);
    }

    #[test]
    fn region_query_analytic() {
        let p = array![[0.0, 0.0], [0.0, 1.0], [0.0, 3.0]];
        assert_eq!(region_query(p.view(), 0, 1.5).unwrap(), vec![0, 1]);
        assert_eq!(
            region_query(p.view(), 3, 1.0),
            Err(ClusteringError::IndexOutOfRange { idx: 3, n: 3 })
        );
    }

    #[test]
    fn line_plus_outlier() {
        // neighbourhoods: {0,1}, {0,1,2}, {1,2}, {3}; min_pts 2 makes 0..2 core
        let p = array![[0.0, 0.0], [0.0, 1.0], [0.0, 2.0], [10.0, 10.0]];
        assert_eq!(
            dbscan(p.view(), &params(1.5, 2)).unwrap(),
            vec![0, 0, 0, -1]
        );
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let p = Array2::from_elem((7, 2), 1.25);
        assert_eq!(dbscan(p.view(), &params(0.1, 7)).unwrap(), vec![0; 7]);
    }

    #[test]
    fn single_point_is_noise() {
        let p = array![[0.0, 0.0]];
        assert_eq!(dbscan(p.view(), &params(1.0, 2)).unwrap(), vec![-1]);
        assert_eq!(dbscan(p.view(), &params(1.0, 1)).unwrap(), vec![0]);
    }

    #[test]
    fn border_point_joins_first_cluster() {
        // at eps 0.85 the point at 1.1 sees {0.3, 1.1, 1.9}: non-core, reachable from both groups
        let upper = [1.9, 2.0, 2.1, 2.2];
        let lower = [0.0, 0.1, 0.2, 0.3];
        let build = |order: &[f64]| {
            Array2::from_shape_fn(
                (order.len(), 2),
                |(i, c)| if c == 0 { 0.0 } else { order[i] },
            )
        };

        let upper_first: Vec<f64> = upper.iter().chain(&lower).chain(&[1.1]).copied().collect();
        let labels = dbscan(build(&upper_first).view(), &params(0.85, 4)).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 0, 1, 1, 1, 1, 0]);

        let lower_first: Vec<f64> = lower.iter().chain(&upper).chain(&[1.1]).copied().collect();
        let labels = dbscan(build(&lower_first).view(), &params(0.85, 4)).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 0, 1, 1, 1, 1, 0]);

        let border_first: Vec<f64> = [1.1].iter().chain(&upper).chain(&lower).copied().collect();
        let labels = dbscan(build(&border_first).view(), &params(0.85, 4)).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn higher_dimensional_points_use_linear_scan() {
        let p = array![[0.0, 0.0, 0.0], [0.0, 0.0, 0.1], [5.0, 5.0, 5.0]];
        assert_eq!(dbscan(p.view(), &params(0.5, 2)).unwrap(), vec![0, 0, -1]);
    }

    #[test]
    fn invalid_params() {
        let p = array![[0.0, 0.0]];
        assert!(dbscan(p.view(), &params(0.0, 2)).is_err());
        assert!(dbscan(p.view(), &params(1.0, 0)).is_err());
    }

    #[test]
    fn standardization() {
        let p = array![[1.0, 5.0], [3.0, 5.0]];
        let s = standardize_columns(p.view());
        assert_eq!(s, array![[-1.0, 0.0], [1.0, 0.0]]);
    }
}
