use std::collections::{BTreeMap, HashSet};

use discourse_dynamics::artifact::{
    downsample, to_canonical_json, CommunityArtifact, Histogram, Metric, PostRecord, Summaries,
    SCHEMA_VERSION,
};
use discourse_dynamics::clustering::{dbscan, region_query, ClusterSpace, DbscanParams, NOISE};
use discourse_dynamics::corpus::{order_timeline, Post};
use discourse_dynamics::dynamics::{compute_dynamics, WindowConfig, WindowMode};
use discourse_dynamics::embedding::{to_distribution, Distribution, Embedding};
use discourse_dynamics::manifold::{
    conditional_affinities, kl_objective, pairwise_squared_distances, symmetrize_affinities,
    tsne_embed, tsne_gradient, GradientMethod, JointAffinities, TsneParams,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn post(id: String, ts: i64) -> Post {
    Post {
        post_id: id,
        community_id: "c".into(),
        author: None,
        timestamp: ts,
        body: String::new(),
    }
}

fn posts_strategy() -> impl Strategy<Value = Vec<Post>> {
    prop::collection::btree_set("[a-z0-9]{1,6}", 0..40).prop_flat_map(|ids| {
        let ids: Vec<String> = ids.into_iter().collect();
        let n = ids.len();
        prop::collection::vec(0i64..20, n).prop_map(move |ts| {
            ids.iter()
                .cloned()
                .zip(ts)
                .map(|(i, t)| post(i, t))
                .collect()
        })
    })
}

fn sequence(seed: u64, len: usize, d: usize) -> Vec<(String, Distribution)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|i| {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            (
                format!("p{i}"),
                to_distribution(&Embedding::new(v).unwrap(), 1.0),
            )
        })
        .collect()
}

fn random_points(seed: u64, n: usize, m: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, m), |_| rng.random_range(-2.0..2.0))
}

fn record(i: usize, ts: i64, novelty: Option<f64>) -> PostRecord {
    PostRecord {
        post_id: format!("r{i:05}"),
        timestamp: ts,
        x: 0.0,
        y: 0.0,
        novelty,
        transience: None,
        resonance: None,
        cluster: NOISE,
        author: None,
        snippet: String::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn order_timeline_is_idempotent_and_a_permutation(posts in posts_strategy()) {
        let once = order_timeline(posts.clone()).unwrap();
        let twice = order_timeline(once.posts().to_vec()).unwrap();
        prop_assert_eq!(once.posts(), twice.posts());
        let mut a: Vec<&str> = posts.iter().map(|p| p.post_id.as_str()).collect();
        let mut b: Vec<&str> = once.posts().iter().map(|p| p.post_id.as_str()).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn canonical_order_ignores_input_order(posts in posts_strategy(), seed in any::<u64>()) {
        let mut shuffled = posts.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        prop_assert_eq!(order_timeline(posts).unwrap(), order_timeline(shuffled).unwrap());
    }

    #[test]
    fn dynamics_are_non_negative(seed in any::<u64>(), len in 2usize..60, n in 1usize..8) {
        let seq = sequence(seed, len, 12);
        for mode in [WindowMode::MeanDistribution, WindowMode::MeanDivergence] {
            for r in compute_dynamics(&seq, &WindowConfig { n, mode }).unwrap() {
                prop_assert!(r.novelty.is_none_or(|v| v >= -1e-12));
                prop_assert!(r.transience.is_none_or(|v| v >= -1e-12));
            }
        }
    }

    #[test]
    fn mean_distribution_never_exceeds_mean_divergence(seed in any::<u64>(), n in 2usize..6) {
        let seq = sequence(seed, 30, 8);
        let a = compute_dynamics(&seq, &WindowConfig { n, mode: WindowMode::MeanDistribution }).unwrap();
        let b = compute_dynamics(&seq, &WindowConfig { n, mode: WindowMode::MeanDivergence }).unwrap();
        for (x, y) in a.iter().zip(&b) {
            if let (Some(x), Some(y)) = (x.novelty, y.novelty) {
                prop_assert!(x <= y + 1e-12);
            }
        }
    }

    #[test]
    fn histograms_partition_values(values in prop::collection::vec(-1e3f64..1e3, 0..200), bins in 1usize..50) {
        let h = Histogram::compute(Metric::Novelty, &values, bins);
        prop_assert_eq!(h.total(), values.len() as u64);
        if values.is_empty() {
            return Ok(());
        }
        let last = h.counts.len() - 1;
        let mut brute = vec![0u64; h.counts.len()];
        for &v in &values {
            let k = (0..h.counts.len())
                .find(|&k| h.bin_edges[k] <= v && (v < h.bin_edges[k + 1] || (k == last && v <= h.bin_edges[k + 1])))
                .expect("every value falls in a bin");
            brute[k] += 1;
        }
        prop_assert_eq!(brute, h.counts);
    }

    #[test]
    fn downsample_is_an_ordered_subset(n in 1usize..400, max_points in 1usize..100, seed in any::<u64>()) {
        let records: Vec<PostRecord> = (0..n).map(|i| record(i, (i * i) as i64 / 7, None)).collect();
        let out = downsample(&records, max_points, seed);
        prop_assert_eq!(out.len(), n.min(max_points));
        prop_assert_eq!(&out[0], &records[0]);
        if max_points >= 2 {
            prop_assert_eq!(out.last().unwrap(), records.last().unwrap());
        }
        let ids: Vec<&str> = records.iter().map(|r| r.post_id.as_str()).collect();
        let positions: Vec<usize> = out.iter().map(|r| ids.iter().position(|i| *i == r.post_id).unwrap()).collect();
        prop_assert!(positions.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(downsample(&records, max_points, seed), out);
    }

    #[test]
    fn artifact_json_round_trips_floats_exactly(values in prop::collection::vec(prop::num::f64::NORMAL, 1..40)) {
        let records: Vec<PostRecord> = values.iter().enumerate().map(|(i, &v)| PostRecord {
            x: v,
            y: -v,
            ..record(i, i as i64, Some(v.abs()))
        }).collect();
        let a = CommunityArtifact {
            schema_version: SCHEMA_VERSION,
            community_id: "c".into(),
            generated_at: 0,
            window: WindowConfig::default(),
            total_posts: records.len(),
            summaries: Summaries::compute(&records, 10),
            records,
        };
        let bytes = to_canonical_json(&a);
        let back: CommunityArtifact = serde_json::from_slice(&bytes).unwrap();
        prop_assert_eq!(&back, &a);
        prop_assert_eq!(to_canonical_json(&back), bytes);
    }
}

#[test]
fn modes_agree_at_window_one() {
    for seed in 0..100 {
        let seq = sequence(seed, 40, 16);
        let a = compute_dynamics(
            &seq,
            &WindowConfig {
                n: 1,
                mode: WindowMode::MeanDistribution,
            },
        )
        .unwrap();
        let b = compute_dynamics(
            &seq,
            &WindowConfig {
                n: 1,
                mode: WindowMode::MeanDivergence,
            },
        )
        .unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in [(x.novelty, y.novelty), (x.transience, y.transience)] {
                match (u, v) {
                    (Some(u), Some(v)) => assert!((u - v).abs() <= 1e-12, "seed {seed}"),
                    (None, None) => {}
                    _ => panic!("presence differs"),
                }
            }
        }
    }
}

#[test]
fn affinities_are_valid_distributions() {
    for seed in 0..10 {
        let x = random_points(seed, 30, 5);
        let d = pairwise_squared_distances(x.view()).unwrap();
        let cond = conditional_affinities(&d, 8.0, 1e-5, 50).unwrap();
        for i in 0..30 {
            let row = cond.row(i);
            assert!((row.sum() - 1.0).abs() <= 1e-9);
            assert_eq!(row[i], 0.0);
            assert!(row.iter().all(|v| *v >= 0.0));
            let h: f64 = row
                .iter()
                .filter(|p| **p > 0.0)
                .map(|p| -p * p.log2())
                .sum();
            assert!(
                (h.exp2() - 8.0).abs() <= 1e-3,
                "row {i}: perplexity {}",
                h.exp2()
            );
        }
        let p = symmetrize_affinities(&cond);
        assert!((p.sum() - 1.0).abs() <= 1e-9);
        for i in 0..30 {
            for j in 0..30 {
                assert!((p[[i, j]] - p[[j, i]]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn barnes_hut_at_theta_zero_matches_exact() {
    let x = random_points(3, 50, 4);
    let d = pairwise_squared_distances(x.view()).unwrap();
    let p = JointAffinities::from_dense(&symmetrize_affinities(
        &conditional_affinities(&d, 10.0, 1e-5, 50).unwrap(),
    ));
    let y = random_points(4, 50, 2);
    let exact = tsne_gradient(&p, &y, GradientMethod::Exact);
    let bh = tsne_gradient(&p, &y, GradientMethod::BarnesHut { theta: 0.0 });
    let err = (&exact - &bh).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(err <= 1e-8, "max diff {err}");
    let (ke, kb) = (
        kl_objective(&p, &y, GradientMethod::Exact),
        kl_objective(&p, &y, GradientMethod::BarnesHut { theta: 0.0 }),
    );
    assert!((ke - kb).abs() <= 1e-8);
}

#[test]
fn tsne_is_independent_of_thread_count() {
    let x = random_points(9, 60, 6);
    let params = TsneParams {
        n_iter: 300,
        seed: 2,
        ..TsneParams::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| tsne_embed(x.view(), &params).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert!(one.objective_trace.iter().all(|v| *v >= 0.0));
}

#[test]
fn barnes_hut_path_runs_and_descends() {
    let x = random_points(10, 300, 8);
    let params = TsneParams {
        algorithm: discourse_dynamics::manifold::TsneAlgorithm::BarnesHut,
        n_iter: 500,
        seed: 1,
        ..TsneParams::default()
    };
    let out = tsne_embed(x.view(), &params).unwrap();
    assert!(out.coords.iter().all(|v| v.is_finite()));
    assert!(out.objective_trace.last().unwrap() < &out.objective_trace[4]);
}

fn labels_of(points: &Array2<f64>, eps: f64, min_pts: usize) -> Vec<i64> {
    dbscan(
        points.view(),
        &DbscanParams {
            eps,
            min_pts,
            space: ClusterSpace::Projection2d,
        },
    )
    .unwrap()
}

#[test]
fn dbscan_labels_are_contiguous_and_cores_clustered() {
    for seed in 0..20 {
        let x = random_points(seed, 150, 2);
        let labels = labels_of(&x, 0.3, 5);
        let distinct: HashSet<i64> = labels.iter().copied().filter(|l| *l != NOISE).collect();
        let k = distinct.len() as i64;
        assert!(distinct.iter().all(|l| (0..k).contains(l)));
        for (i, label) in labels.iter().enumerate() {
            if region_query(x.view(), i, 0.3).unwrap().len() >= 5 {
                assert_ne!(*label, NOISE);
            }
        }
    }
}

#[test]
fn dbscan_permutation_consistency() {
    for seed in 0..20 {
        let x = random_points(seed, 150, 2);
        let mut order: Vec<usize> = (0..150).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for i in (1..150).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let permuted = Array2::from_shape_fn((150, 2), |(i, k)| x[[order[i], k]]);
        let a = labels_of(&x, 0.3, 5);
        let b = labels_of(&permuted, 0.3, 5);
        let noise_a: HashSet<usize> = (0..150).filter(|&i| a[i] == NOISE).collect();
        let noise_b: HashSet<usize> = (0..150)
            .filter(|&i| b[i] == NOISE)
            .map(|i| order[i])
            .collect();
        assert_eq!(noise_a, noise_b);
        // core points keep their co-membership; border ties may legitimately differ
        let core: Vec<bool> = (0..150)
            .map(|i| region_query(x.view(), i, 0.3).unwrap().len() >= 5)
            .collect();
        let mut inverse = vec![0; 150];
        for (i, &o) in order.iter().enumerate() {
            inverse[o] = i;
        }
        let mut mapping: BTreeMap<i64, i64> = BTreeMap::new();
        for i in (0..150).filter(|&i| core[i]) {
            let mapped = *mapping.entry(a[i]).or_insert(b[inverse[i]]);
            assert_eq!(mapped, b[inverse[i]], "seed {seed}");
        }
        let image: HashSet<i64> = mapping.values().copied().collect();
        assert_eq!(image.len(), mapping.len());
    }
}

#[test]
fn dbscan_noise_shrinks_as_eps_grows() {
    for seed in 0..20 {
        let x = random_points(seed, 150, 2);
        let mut previous: Option<HashSet<usize>> = None;
        for eps in [0.1, 0.2, 0.3, 0.45, 0.6, 1.0] {
            let labels = labels_of(&x, eps, 6);
            let noise: HashSet<usize> = (0..150).filter(|&i| labels[i] == NOISE).collect();
            if let Some(prev) = &previous {
                assert!(noise.is_subset(prev), "seed {seed} eps {eps}");
            }
            previous = Some(noise);
        }
    }
}
