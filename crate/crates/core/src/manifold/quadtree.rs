//! Point-region quadtree over 2-D coordinates for Barnes-Hut repulsion.

use ndarray::Array2;

const MAX_DEPTH: usize = 48;

#[derive(Debug, Clone)]
struct Node {
    cx: f64,
    cy: f64,
    half: f64,
    count: usize,
    com: [f64; 2],
    /// Index of the first of four contiguous children, if subdivided.
    children: Option<usize>,
    /// Points stored at a leaf (more than one only for coincident points or
    /// at the depth limit).
    points: Vec<usize>,
}

impl Node {
    fn new(cx: f64, cy: f64, half: f64) -> Self {
        Self {
            cx,
            cy,
            half,
            count: 0,
            com: [0.0, 0.0],
            children: None,
            points: Vec::new(),
        }
    }

    fn quadrant(&self, p: [f64; 2]) -> usize {
        usize::from(p[0] >= self.cx) | (usize::from(p[1] >= self.cy) << 1)
    }
}

#[derive(Debug, Clone)]
pub struct QuadTree<'a> {
    nodes: Vec<Node>,
    y: &'a Array2<f64>,
}

impl<'a> QuadTree<'a> {
    pub fn build(y: &'a Array2<f64>) -> Self {
        let n = y.nrows();
        let (mut min_x, mut max_x, mut min_y, mut max_y) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for i in 0..n {
            min_x = min_x.min(y[[i, 0]]);
            max_x = max_x.max(y[[i, 0]]);
            min_y = min_y.min(y[[i, 1]]);
            max_y = max_y.max(y[[i, 1]]);
        }
        let half = ((max_x - min_x).max(max_y - min_y) / 2.0).max(1e-12) * (1.0 + 1e-9);
        let root = Node::new((min_x + max_x) / 2.0, (min_y + max_y) / 2.0, half);
        let mut tree = Self {
            nodes: vec![root],
            y,
        };
        for i in 0..n {
            tree.insert(i);
        }
        tree
    }

    fn point(&self, i: usize) -> [f64; 2] {
        [self.y[[i, 0]], self.y[[i, 1]]]
    }

    fn insert(&mut self, i: usize) {
        let p = self.point(i);
        let mut node = 0;
        let mut depth = 0;
        loop {
            {
                let nd = &mut self.nodes[node];
                let c = nd.count as f64;
                nd.com[0] = (nd.com[0] * c + p[0]) / (c + 1.0);
                nd.com[1] = (nd.com[1] * c + p[1]) / (c + 1.0);
                nd.count += 1;
            }
            if let Some(first) = self.nodes[node].children {
                node = first + self.nodes[node].quadrant(p);
                depth += 1;
                continue;
            }
            let nd = &self.nodes[node];
            let coincident = nd.points.iter().all(|&j| self.point(j) == p);
            if nd.points.is_empty() || coincident || depth >= MAX_DEPTH {
                self.nodes[node].points.push(i);
                return;
            }
            self.subdivide(node);
            // push the existing points down one level; `i` continues the loop
            let existing = std::mem::take(&mut self.nodes[node].points);
            let first = self.nodes[node].children.expect("just subdivided");
            for j in existing {
                let q = self.point(j);
                let child = first + self.nodes[node].quadrant(q);
                let c = &mut self.nodes[child];
                let k = c.count as f64;
                c.com[0] = (c.com[0] * k + q[0]) / (k + 1.0);
                c.com[1] = (c.com[1] * k + q[1]) / (k + 1.0);
                c.count += 1;
                c.points.push(j);
            }
            node = first + self.nodes[node].quadrant(p);
            depth += 1;
        }
    }

    fn subdivide(&mut self, node: usize) {
        let (cx, cy, h) = {
            let nd = &self.nodes[node];
            (nd.cx, nd.cy, nd.half / 2.0)
        };
        let first = self.nodes.len();
        for q in 0..4 {
            let dx = if q & 1 == 1 { h } else { -h };
            let dy = if q & 2 == 2 { h } else { -h };
            self.nodes.push(Node::new(cx + dx, cy + dy, h));
        }
        self.nodes[node].children = Some(first);
    }

    /// Repulsive force numerator `Σ_j w_ij² (y_i − y_j)` and normalizer share
    /// `Σ_j w_ij` for point `i`, with `w = 1 / (1 + d²)`. Cells whose width
    /// over distance falls below `theta` are summarized by their centre of
    /// mass; `theta = 0` visits every point.
    pub fn repulsion(&self, i: usize, theta: f64) -> ([f64; 2], f64) {
        let p = self.point(i);
        let mut force = [0.0, 0.0];
        let mut z = 0.0;
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            let nd = &self.nodes[node];
            if nd.count == 0 {
                continue;
            }
            match nd.children {
                None => {
                    for &j in &nd.points {
                        if j == i {
                            continue;
                        }
                        let q = self.point(j);
                        let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
                        let w = 1.0 / (1.0 + dx * dx + dy * dy);
                        z += w;
                        force[0] += w * w * dx;
                        force[1] += w * w * dy;
                    }
                }
                Some(first) => {
                    let (dx, dy) = (p[0] - nd.com[0], p[1] - nd.com[1]);
                    let d2 = dx * dx + dy * dy;
                    if d2 > 0.0 && 2.0 * nd.half / d2.sqrt() < theta {
                        let w = 1.0 / (1.0 + d2);
                        let m = nd.count as f64;
                        z += m * w;
                        force[0] += m * w * w * dx;
                        force[1] += m * w * w * dy;
                    } else {
                        // reversed so children are visited in quadrant order
                        stack.extend((first..first + 4).rev());
                    }
                }
            }
        }
        (force, z)
    }

    #[cfg(test)]
    fn total_count(&self) -> usize {
        self.nodes[0].count
    }
}
