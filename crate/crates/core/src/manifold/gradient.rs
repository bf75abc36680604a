use ndarray::Array2;
use rayon::prelude::*;

use super::affinity::JointAffinities;
use super::quadtree::QuadTree;

/// How the repulsive half of the gradient is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMethod {
    /// All pairs, O(N²).
    Exact,
    /// Quadtree summaries at opening angle `theta`.
    BarnesHut { theta: f64 },
}

fn points(y: &Array2<f64>) -> Vec<[f64; 2]> {
    y.rows().into_iter().map(|r| [r[0], r[1]]).collect()
}

/// Per-point repulsion numerators and the Student-t normalizer `Z`.
fn repulsion(y: &Array2<f64>, method: GradientMethod) -> (Vec<[f64; 2]>, f64) {
    let n = y.nrows();
    let per_point: Vec<([f64; 2], f64)> = match method {
        GradientMethod::Exact => {
            let pts = points(y);
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let [yi0, yi1] = pts[i];
                    let mut f = [0.0, 0.0];
                    let mut z = 0.0;
                    for (j, &[yj0, yj1]) in pts.iter().enumerate() {
                        if j == i {
                            continue;
                        }
                        let dx = yi0 - yj0;
                        let dy = yi1 - yj1;
                        let w = 1.0 / (1.0 + dx * dx + dy * dy);
                        z += w;
                        f[0] += w * w * dx;
                        f[1] += w * w * dy;
                    }
                    (f, z)
                })
                .collect()
        }
        GradientMethod::BarnesHut { theta } => {
            let tree = QuadTree::build(y);
            (0..n)
                .into_par_iter()
                .map(|i| tree.repulsion(i, theta))
                .collect()
        }
    };
    // sequential reduction keeps Z independent of the thread count
    let z = per_point.iter().map(|(_, z)| z).sum();
    (per_point.into_iter().map(|(f, _)| f).collect(), z)
}

/// Gradient of `KL(P ‖ Q)` with respect to the 2-D coordinates, with the
/// attractive term scaled by `exaggeration`.
pub fn tsne_gradient_scaled(
    p: &JointAffinities,
    y: &Array2<f64>,
    method: GradientMethod,
    exaggeration: f64,
) -> Array2<f64> {
    let n = y.nrows();
    assert_eq!(p.n(), n, "affinity and coordinate sizes differ");
    let (rep, z) = repulsion(y, method);
    let pts = points(y);
    let rows: Vec<[f64; 2]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut attr = [0.0, 0.0];
            for (j, pij) in p.row(i) {
                let dx = pts[i][0] - pts[j][0];
                let dy = pts[i][1] - pts[j][1];
                let w = 1.0 / (1.0 + dx * dx + dy * dy);
                attr[0] += pij * w * dx;
                attr[1] += pij * w * dy;
            }
            [
                4.0 * (exaggeration * attr[0] - rep[i][0] / z),
                4.0 * (exaggeration * attr[1] - rep[i][1] / z),
            ]
        })
        .collect();
    Array2::from_shape_vec((n, 2), rows.concat()).expect("n*2 entries")
}

/// `grad_i = 4 Σ_j (P_ij − Q_ij)(y_i − y_j)(1 + ‖y_i − y_j‖²)⁻¹`.
pub fn tsne_gradient(p: &JointAffinities, y: &Array2<f64>, method: GradientMethod) -> Array2<f64> {
    tsne_gradient_scaled(p, y, method, 1.0)
}

/// `KL(P ‖ Q)` over the stored affinities; `Z` comes from `method`.
pub fn kl_objective(p: &JointAffinities, y: &Array2<f64>, method: GradientMethod) -> f64 {
    let (_, z) = repulsion(y, method);
    let pts = points(y);
    let per_row: Vec<f64> = (0..p.n())
        .into_par_iter()
        .map(|i| {
            p.row(i)
                .map(|(j, pij)| {
                    let dx = pts[i][0] - pts[j][0];
                    let dy = pts[i][1] - pts[j][1];
                    let q = 1.0 / (1.0 + dx * dx + dy * dy) / z;
                    pij * (pij / q).ln()
                })
                .sum()
        })
        .collect();
    per_row.iter().sum()
}
