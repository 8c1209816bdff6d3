//! Randomized invariants over the encoder, the partitioner and the metric.

use proptest::prelude::*;

use gipa::encode::{BucketMethod, FeatureEncoder};
use gipa::graph::{build_graph, random_partition, Split};
use gipa::matrix::Matrix;
use gipa::metrics::roc_auc;

fn bucket_slot(sparse: &[f64], width: usize, row: usize) -> usize {
    (0..width).find(|&c| sparse[row * width + c] == 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bucketization_is_monotone(
        vals in prop::collection::vec(-1e3f64..1e3, 8..60),
        k in 2usize..7,
        equal_width in any::<bool>(),
    ) {
        let method = if equal_width { BucketMethod::EqualWidth } else { BucketMethod::EqualFrequency };
        let m = Matrix { rows: vals.len(), cols: 1, data: vals.clone() };
        let enc = FeatureEncoder::fit(&m, k, method).unwrap();
        let sparse = enc.sparse_embed(&m).unwrap().to_vec();
        let w = enc.block_width();
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        for pair in order.windows(2) {
            prop_assert!(bucket_slot(&sparse, w, pair[0]) <= bucket_slot(&sparse, w, pair[1]));
        }
    }

    #[test]
    fn equal_values_share_a_bucket(
        vals in prop::collection::vec(-50f64..50.0, 4..30),
        k in 2usize..7,
    ) {
        // duplicate every value so ties exist by construction
        let mut doubled = vals.clone();
        doubled.extend_from_slice(&vals);
        let m = Matrix { rows: doubled.len(), cols: 1, data: doubled };
        let enc = FeatureEncoder::fit(&m, k, BucketMethod::EqualFrequency).unwrap();
        let sparse = enc.sparse_embed(&m).unwrap().to_vec();
        let w = enc.block_width();
        for i in 0..vals.len() {
            prop_assert_eq!(
                bucket_slot(&sparse, w, i),
                bucket_slot(&sparse, w, i + vals.len())
            );
        }
    }

    #[test]
    fn partitions_cover_every_node_exactly_once(
        n in 4usize..60,
        extra in 0usize..40,
        parts in 1usize..5,
        seed in 0u64..500,
    ) {
        prop_assume!(parts <= n);
        // ring plus random chords keeps the graph connected and varied
        let mut rng_state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        for _ in 0..extra {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let a = (rng_state >> 33) as usize % n;
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let b = (rng_state >> 33) as usize % n;
            if a != b {
                edges.push((a, b));
            }
        }
        let e_feat = Matrix::zeros(edges.len(), 1);
        let graph = build_graph(
            &edges,
            &e_feat,
            Matrix::zeros(n, 2),
            Matrix::zeros(n, 1),
            vec![Split::Train; n],
            false,
        ).unwrap();
        let subs = random_partition(&graph, parts, seed).unwrap();
        let mut seen: Vec<usize> = subs.iter().flat_map(|s| s.parent_ids.iter().copied()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        for s in &subs {
            prop_assert_eq!(s.parent_ids.len(), s.graph.n_nodes);
            // every kept edge references local ids
            for &src in &s.graph.src_ids {
                prop_assert!(src < s.graph.n_nodes);
            }
        }
    }

    #[test]
    fn auc_ignores_monotone_transforms(
        raw in prop::collection::vec(-500i32..500, 4..120),
        labels in prop::collection::vec(any::<bool>(), 120),
    ) {
        // grid-valued scores so ties are real and transforms keep them
        let scores: Vec<f64> = raw.iter().map(|&v| v as f64 * 0.01).collect();
        let labels: Vec<f64> = labels.iter().take(scores.len()).map(|&b| f64::from(b)).collect();
        prop_assume!(labels.len() == scores.len());
        prop_assume!(labels.iter().any(|&l| l == 1.0) && labels.iter().any(|&l| l == 0.0));
        let base = roc_auc(&scores, &labels).unwrap();
        let sigmoid: Vec<f64> = scores.iter().map(|&s| 1.0 / (1.0 + (-s).exp())).collect();
        let affine: Vec<f64> = scores.iter().map(|&s| 2.0 * s + 3.0).collect();
        prop_assert_eq!(base, roc_auc(&sigmoid, &labels).unwrap());
        prop_assert_eq!(base, roc_auc(&affine, &labels).unwrap());
    }
}
