use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Novelty,
    Transience,
    Resonance,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Novelty, Metric::Transience, Metric::Resonance];
}

/// Equal-width histogram. Bins are half-open `[lo, hi)` except the last,
/// which is closed. With no values both vectors are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Histogram {
    pub metric: Metric,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Bins `values` into `bins` equal-width bins spanning `[min, max]`.
    /// When every value is equal the span is widened by 0.5 on each side.
    pub fn compute(metric: Metric, values: &[f64], bins: usize) -> Self {
        assert!(bins >= 1, "at least one bin");
        if values.is_empty() {
            return Self {
                metric,
                bin_edges: Vec::new(),
                counts: Vec::new(),
            };
        }
        let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            lo -= 0.5;
            hi += 0.5;
        }
        let mut edges: Vec<f64> = (0..=bins)
            .map(|i| {
                let scaled = (hi - lo) * i as f64;
                if scaled.is_finite() {
                    lo + scaled / bins as f64
                } else {
                    lo + (hi - lo) * (i as f64 / bins as f64)
                }
            })
            .collect();
        edges[bins] = hi;
        let mut counts = vec![0u64; bins];
        let interior = &edges[1..bins];
        for &v in values {
            counts[interior.partition_point(|&e| e <= v)] += 1;
        }
        Self {
            metric,
            bin_edges: edges,
            counts,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_binning() {
        let h = Histogram::compute(Metric::Novelty, &[0.0, 1.0, 2.0, 3.0], 2);
        assert_eq!(h.bin_edges, vec![0.0, 1.5, 3.0]);
        assert_eq!(h.counts, vec![2, 2]);
    }

    #[test]
    fn max_lands_in_last_bin() {
        let h = Histogram::compute(Metric::Resonance, &[-1.0, 0.0, 1.0], 4);
        assert_eq!(h.counts, vec![1, 0, 1, 1]);
    }

    #[test]
    fn degenerate_and_empty() {
        let h = Histogram::compute(Metric::Transience, &[2.0, 2.0], 2);
        assert_eq!(h.bin_edges, vec![1.5, 2.0, 2.5]);
        assert_eq!(h.counts, vec![0, 2]);
        let e = Histogram::compute(Metric::Transience, &[], 40);
        assert!(e.bin_edges.is_empty() && e.counts.is_empty());
    }
}
