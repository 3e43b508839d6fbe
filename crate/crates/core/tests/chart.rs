use ndarray::{Array2, Array3};
use proptest::prelude::*;
use treecrf::chart::reference::{cky_unbatched, inside_unbatched};
use treecrf::chart::{cky, inside, label_aggregate, marginals, mbr_decode, tree_score, AggregateMode, LabelChart};
use treecrf::oracle::{brute_labeled_log_z, enumerate_trees, score_of};
use treecrf::{SpanChart, UnlabeledTree};

fn fixed() -> Array2<f64> {
    Array2::from_shape_fn((5, 5), |(i, j)| ((i * 7 + j * 3) % 11) as f64 * 0.25 - 1.0)
}

fn tree(n: usize, spans: &[(usize, usize)]) -> UnlabeledTree {
    UnlabeledTree::new(n, spans.to_vec()).unwrap()
}

// Expected values below were computed once by enumerating all 14 trees.

#[test]
fn frozen_partition_and_marginals() {
    let c = SpanChart::from_matrices(&[fixed()]).unwrap();
    let z = inside(&c).unwrap().log_z[0];
    assert!((z - 2.351993493290834).abs() < 1e-12);
    let p = marginals(&c).unwrap();
    for ((i, j), want) in [
        ((0, 1), 0.30988170005340365),
        ((1, 3), 0.38669668477159114),
        ((2, 4), 0.13210938939232778),
        ((0, 3), 0.6335393794646353),
        ((0, 4), 1.0),
    ] {
        assert!((p.get(0, i, j) - want).abs() < 1e-12, "({i}, {j})");
    }
}

#[test]
fn frozen_decodes() {
    let c = SpanChart::from_matrices(&[fixed()]).unwrap();
    let v = cky(&c).unwrap();
    // several trees score 0.75; the lowest split wins at every node
    assert_eq!(v.scores[0], 0.75);
    assert_eq!(
        v.trees[0],
        tree(
            5,
            &[(0, 4), (0, 3), (0, 2), (0, 1), (0, 0), (1, 1), (2, 2), (3, 3), (4, 4)]
        )
    );
    let m = mbr_decode(&c).unwrap();
    assert!((m.scores[0] - 2.447859669073883).abs() < 1e-12);
    assert_eq!(
        m.trees[0],
        tree(
            5,
            &[(0, 4), (0, 3), (0, 2), (0, 0), (1, 2), (1, 1), (2, 2), (3, 3), (4, 4)]
        )
    );
}

#[test]
fn frozen_labeled_partition() {
    let g = Array3::from_shape_fn((4, 4, 2), |(i, j, l)| ((i + 2 * j + 3 * l) % 5) as f64 * 0.5 - 1.0);
    assert!((brute_labeled_log_z(&g).unwrap() - 4.270058744846794).abs() < 1e-12);
    let agg = label_aggregate(&LabelChart::from_grids(&[g]).unwrap(), AggregateMode::LogSumExp).unwrap();
    assert!((inside(&agg.chart).unwrap().log_z[0] - 4.270058744846794).abs() < 1e-12);
}

#[test]
fn invalid_scores_are_reported() {
    let mut m = fixed();
    m[[1, 3]] = f64::NAN;
    let c = SpanChart::from_matrices(&[fixed(), m]).unwrap();
    assert!(inside(&c).is_err() && cky(&c).is_err() && marginals(&c).is_err());
    let mut forbid = fixed();
    forbid[[0, 3]] = f64::NEG_INFINITY;
    let r = cky(&SpanChart::from_matrices(&[forbid]).unwrap()).unwrap();
    assert!(!r.trees[0].contains(0, 3));
}

fn matrices(max_len: usize, max_batch: usize) -> impl Strategy<Value = Vec<Array2<f64>>> {
    prop::collection::vec(
        (1..=max_len).prop_flat_map(|n| {
            prop::collection::vec(-5.0f64..5.0, n * n).prop_map(move |v| Array2::from_shape_vec((n, n), v).unwrap())
        }),
        1..=max_batch,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn marginals_are_probabilities_summing_to_n_minus_1(mats in matrices(12, 20)) {
        let p = marginals(&SpanChart::from_matrices(&mats).unwrap()).unwrap();
        for (b, m) in mats.iter().enumerate() {
            let n = m.nrows();
            let mut sum = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    let v = p.get(b, i, j);
                    prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
                    sum += v;
                }
            }
            prop_assert!((sum - (n - 1) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn batching_matches_one_sentence_loops(mats in matrices(16, 20)) {
        let c = SpanChart::from_matrices(&mats).unwrap();
        let z = inside(&c).unwrap().log_z;
        let v = cky(&c).unwrap();
        for (b, m) in mats.iter().enumerate() {
            let (t, s) = cky_unbatched(m);
            prop_assert_eq!(&v.trees[b], &t);
            prop_assert_eq!(v.scores[b], s);
            prop_assert!((z[b] - inside_unbatched(m)).abs() < 1e-9);
            prop_assert!(z[b] >= s - 1e-9);
            prop_assert!((tree_score(&c, b, &t).unwrap() - s).abs() < 1e-9);
        }
    }

    #[test]
    fn results_do_not_depend_on_batch_order(mats in matrices(10, 12), rot in 0usize..12) {
        let c = SpanChart::from_matrices(&mats).unwrap();
        let k = rot % mats.len();
        let order: Vec<usize> = (k..mats.len()).chain(0..k).collect();
        let d = c.select(&order);
        let (zc, zd) = (inside(&c).unwrap().log_z, inside(&d).unwrap().log_z);
        let (vc, vd) = (cky(&c).unwrap(), cky(&d).unwrap());
        for (pos, &b) in order.iter().enumerate() {
            prop_assert_eq!(zc[b].to_bits(), zd[pos].to_bits());
            prop_assert_eq!(&vc.trees[b], &vd.trees[pos]);
        }
    }

    #[test]
    fn cky_beats_every_enumerated_tree(mats in matrices(7, 4)) {
        let r = cky(&SpanChart::from_matrices(&mats).unwrap()).unwrap();
        for (b, m) in mats.iter().enumerate() {
            for t in enumerate_trees(m.nrows()).unwrap().trees {
                prop_assert!(score_of(m, &t) <= r.scores[b] + 1e-9);
            }
        }
    }

    #[test]
    fn shifting_the_root_span_leaves_marginals(mats in matrices(9, 6), shift in -3.0f64..3.0) {
        // every tree has exactly one span covering the whole sentence
        let c = SpanChart::from_matrices(&mats).unwrap();
        let shifted: Vec<Array2<f64>> = mats
            .iter()
            .map(|m| {
                let mut m = m.clone();
                let n = m.nrows();
                m[[0, n - 1]] += shift;
                m
            })
            .collect();
        let d = SpanChart::from_matrices(&shifted).unwrap();
        let (pc, pd) = (marginals(&c).unwrap(), marginals(&d).unwrap());
        let (zc, zd) = (inside(&c).unwrap().log_z, inside(&d).unwrap().log_z);
        for (b, m) in mats.iter().enumerate() {
            let n = m.nrows();
            if n > 1 {
                prop_assert!((zd[b] - zc[b] - shift).abs() < 1e-9);
            }
            for i in 0..n {
                for j in i..n {
                    prop_assert!((pc.get(b, i, j) - pd.get(b, i, j)).abs() < 1e-9);
                }
            }
        }
    }
}
