use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::ManifoldError;

/// Floor applied to off-diagonal joint affinities.
pub const JOINT_FLOOR: f64 = 1e-12;

/// `D_ij = ‖e_i − e_j‖²` with an exact zero diagonal.
pub fn pairwise_squared_distances(x: ArrayView2<f64>) -> Result<Array2<f64>, ManifoldError> {
    let n = x.nrows();
    if n < 2 {
        return Err(ManifoldError::TooFewPoints { n, min: 2 });
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            (0..n)
                .map(|j| {
                    if i == j {
                        return 0.0;
                    }
                    // computed in (min, max) index order so D is exactly symmetric
                    let (a, b) = if i < j {
                        (xi, x.row(j))
                    } else {
                        (x.row(j), xi)
                    };
                    a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum()
                })
                .collect()
        })
        .collect();
    Ok(Array2::from_shape_vec((n, n), rows.concat()).expect("n*n entries"))
}

/// Gaussian affinities of one row against `dists` (self excluded), with the
/// precision chosen by bisection so the row entropy matches `ln(perplexity)`.
///
/// Returns the normalized row. If `max_iter` bisections do not reach `tol`
/// the row with the smallest entropy error seen is returned.
pub fn calibrate_row(dists: &[f64], perplexity: f64, tol: f64, max_iter: usize) -> Vec<f64> {
    let target = perplexity.ln();
    let d_min = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = dists.iter().map(|d| d - d_min).collect();

    let row_at = |beta: f64| -> (Vec<f64>, f64) {
        let w: Vec<f64> = shifted.iter().map(|d| (-beta * d).exp()).collect();
        let sum: f64 = w.iter().sum();
        let weighted: f64 = w.iter().zip(&shifted).map(|(w, d)| w * d).sum();
        let entropy = sum.ln() + beta * weighted / sum;
        (w.into_iter().map(|v| v / sum).collect(), entropy)
    };

    let mut beta = 1.0;
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..max_iter.max(1) {
        let (row, entropy) = row_at(beta);
        let diff = entropy - target;
        if best.as_ref().is_none_or(|(e, _)| diff.abs() < *e) {
            best = Some((diff.abs(), row));
        }
        if diff.abs() < tol {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() {
                (beta + hi) / 2.0
            } else {
                beta * 2.0
            };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
    best.expect("at least one iteration").1
}

/// Row-stochastic conditional affinities `p_{j|i}` with zero diagonal.
pub fn conditional_affinities(
    distances: &Array2<f64>,
    perplexity: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Array2<f64>, ManifoldError> {
    let n = distances.nrows();
    if n < 2 {
        return Err(ManifoldError::TooFewPoints { n, min: 2 });
    }
    if !(perplexity > 0.0 && perplexity < n as f64) {
        return Err(ManifoldError::InvalidParams(format!(
            "perplexity {perplexity} must lie in (0, {n})"
        )));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let others: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| distances[[i, j]])
                .collect();
            let mut row = calibrate_row(&others, perplexity, tol, max_iter);
            row.insert(i, 0.0);
            row
        })
        .collect();
    Ok(Array2::from_shape_vec((n, n), rows.concat()).expect("n*n entries"))
}

/// `P_ij = (p_{j|i} + p_{i|j}) / 2N`, off-diagonal floored at [`JOINT_FLOOR`]
/// and renormalized to unit total.
pub fn symmetrize_affinities(p_cond: &Array2<f64>) -> Array2<f64> {
    let n = p_cond.nrows();
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[[i, j]] = ((p_cond[[i, j]] + p_cond[[j, i]]) / (2.0 * n as f64)).max(JOINT_FLOOR);
            }
        }
    }
    let total = p.sum();
    p.mapv_inplace(|v| v / total);
    p
}

/// Joint affinities in compressed sparse row form. Dense matrices convert
/// with every off-diagonal entry kept.
#[derive(Debug, Clone, PartialEq)]
pub struct JointAffinities {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl JointAffinities {
    pub fn from_dense(p: &Array2<f64>) -> Self {
        let n = p.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                if i != j && p[[i, j]] > 0.0 {
                    cols.push(j);
                    vals.push(p[[i, j]]);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Sparse affinities from each point's `k` nearest neighbours, calibrated
    /// to `perplexity` and symmetrized.
    pub fn from_knn(
        x: ArrayView2<f64>,
        perplexity: f64,
        k: usize,
        tol: f64,
        max_iter: usize,
    ) -> Result<Self, ManifoldError> {
        let n = x.nrows();
        if n < 2 {
            return Err(ManifoldError::TooFewPoints { n, min: 2 });
        }
        let k = k.clamp(1, n - 1);
        let conditional: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = x.row(i);
                let mut d: Vec<(usize, f64)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let dist = xi
                            .iter()
                            .zip(x.row(j).iter())
                            .map(|(u, v)| (u - v) * (u - v))
                            .sum();
                        (j, dist)
                    })
                    .collect();
                let by_dist =
                    |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
                if k < d.len() {
                    d.select_nth_unstable_by(k - 1, by_dist);
                    d.truncate(k);
                }
                d.sort_by(by_dist);
                let dists: Vec<f64> = d.iter().map(|(_, v)| *v).collect();
                let row = calibrate_row(&dists, perplexity.min(k as f64), tol, max_iter);
                d.iter().map(|(j, _)| *j).zip(row).collect()
            })
            .collect();

        // symmetrize: accumulate p_{j|i} into both (i, j) and (j, i)
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, row) in conditional.iter().enumerate() {
            for &(j, v) in row {
                rows[i].push((j, v));
                rows[j].push((i, v));
            }
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for mut row in rows {
            row.sort_by_key(|(j, _)| *j);
            let mut iter = row.into_iter().peekable();
            while let Some((j, mut v)) = iter.next() {
                while let Some(&(j2, v2)) = iter.peek() {
                    if j2 != j {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                cols.push(j);
                vals.push((v / (2.0 * n as f64)).max(JOINT_FLOOR));
            }
            row_ptr.push(cols.len());
        }
        let total: f64 = vals.iter().sum();
        vals.iter_mut().for_each(|v| *v /= total);
        Ok(Self {
            n,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn total(&self) -> f64 {
        self.vals.iter().sum()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut p = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                p[[i, j]] = v;
            }
        }
        p
    }
}
