use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PostRecord;
use crate::hashing::mix64;

/// Deterministic stratified subsample of at most `max_points` records.
///
/// Records are split into `⌈√max_points⌉` equal-width time strata. The first
/// and last record are always kept; the remaining budget is shared across
/// strata in proportion to their size (largest remainder) and each stratum is
/// sampled uniformly with its own seeded generator. Output keeps input order.
/// `max_points == 1` keeps only the first record.
pub fn downsample(records: &[PostRecord], max_points: usize, seed: u64) -> Vec<PostRecord> {
    assert!(max_points >= 1, "max_points must be >= 1");
    let len = records.len();
    if len <= max_points {
        return records.to_vec();
    }
    if max_points == 1 {
        return vec![records[0].clone()];
    }

    let strata = (max_points as f64).sqrt().ceil() as usize;
    let t0 = records[0].timestamp;
    let t1 = records[len - 1].timestamp;
    let span = (t1 - t0) as f64;
    let stratum_of = |ts: i64| -> usize {
        if span <= 0.0 {
            0
        } else {
            (((ts - t0) as f64 / span * strata as f64) as usize).min(strata - 1)
        }
    };

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); strata];
    for (i, r) in records.iter().enumerate().take(len - 1).skip(1) {
        members[stratum_of(r.timestamp)].push(i);
    }

    let budget = max_points - 2;
    let pool = len - 2;
    let mut quota: Vec<usize> = members.iter().map(|m| m.len() * budget / pool).collect();
    let mut remaining = budget - quota.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..strata).collect();
    // largest fractional share first, ties by stratum index
    by_remainder.sort_by_key(|&s| (std::cmp::Reverse(members[s].len() * budget % pool), s));
    for s in by_remainder {
        if remaining == 0 {
            break;
        }
        if quota[s] < members[s].len() {
            quota[s] += 1;
            remaining -= 1;
        }
    }

    let mut keep = vec![0, len - 1];
    for (s, m) in members.iter().enumerate() {
        if quota[s] == 0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(s as u64 + 1)));
        keep.extend(
            index::sample(&mut rng, m.len(), quota[s])
                .into_iter()
                .map(|k| m[k]),
        );
    }
    keep.sort_unstable();
    keep.into_iter().map(|i| records[i].clone()).collect()
}
