//! Losses over packed charts, each with its derivative w.r.t. the scores.

use ndarray::{Array3, ArrayView3};

use crate::chart::{
    cky, inside, label_aggregate, marginals, tree_score, AggregateMode, LabelChart, SpanChart, UnlabeledTree,
};
use crate::error::{Error, Result};
use crate::treebank::{BinaryTree, LabelVocab, Tree};

/// `(start, end, label index)`.
pub type LabeledSpan = (usize, usize, usize);

/// Per-instance losses and `d loss_b / d s_b(i, j)`.
pub struct SpanLoss {
    pub losses: Vec<f64>,
    pub adjoints: SpanChart,
}

/// Per-instance losses and `d loss_b / d s_b(i, j, l)`.
pub struct LabelLoss {
    pub losses: Vec<f64>,
    pub adjoints: LabelChart,
}

/// Every constituent of `tree` with its label index.
pub fn gold_spans(tree: &BinaryTree, vocab: &LabelVocab) -> Result<Vec<LabeledSpan>> {
    tree.constituents()
        .into_iter()
        .map(|c| Ok((c.start, c.end, vocab.index_of(&c.label)?)))
        .collect()
}

fn check_gold(lengths: &[usize], gold_lens: impl ExactSizeIterator<Item = usize>) -> Result<()> {
    if gold_lens.len() != lengths.len() {
        return Err(Error::Shape(format!(
            "{} gold trees for {} instances",
            gold_lens.len(),
            lengths.len()
        )));
    }
    for (b, (g, &n)) in gold_lens.zip(lengths).enumerate() {
        if g != n {
            return Err(Error::Shape(format!(
                "instance {b}: gold tree over {g} words, chart over {n}"
            )));
        }
    }
    Ok(())
}

/// Tree CRF loss `-score(gold) + log Z`. The adjoint of a width >= 2 span
/// is its marginal minus its gold indicator; width-1 adjoints are 0.
pub fn crf_bracket_loss(scores: &SpanChart, gold: &[UnlabeledTree]) -> Result<SpanLoss> {
    check_gold(scores.lengths(), gold.iter().map(|t| t.len()))?;
    let z = inside(scores)?.log_z;
    let mut adj = marginals(scores)?;
    let mut losses = Vec::with_capacity(gold.len());
    for (b, t) in gold.iter().enumerate() {
        losses.push(z[b] - tree_score(scores, b, t)?);
        for i in 0..t.len() {
            adj.set(b, i, i, 0.0);
        }
        for (i, j) in t.internal() {
            adj.set(b, i, j, adj.get(b, i, j) - 1.0);
        }
    }
    Ok(SpanLoss { losses, adjoints: adj })
}

/// Mean cross-entropy of the gold label over the gold constituents of one
/// sentence, and its adjoint `softmax - onehot` at those cells.
pub fn label_loss(scores: ArrayView3<f64>, gold: &[LabeledSpan]) -> Result<(f64, Array3<f64>)> {
    let (n, _, nl) = scores.dim();
    let mut adj = Array3::zeros(scores.raw_dim());
    if gold.is_empty() {
        return Ok((0.0, adj));
    }
    let mut total = 0.0;
    let scale = 1.0 / gold.len() as f64;
    for &(i, j, l) in gold {
        if i > j || j >= n || l >= nl {
            return Err(Error::OutOfRange(format!(
                "gold span ({i}, {j}) label {l} outside {n}x{n}x{nl}"
            )));
        }
        let xs = scores.slice(ndarray::s![i, j, ..]);
        let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = xs.iter().map(|x| (x - m).exp()).sum();
        let lse = m + sum.ln();
        total += lse - xs[l];
        for k in 0..nl {
            adj[[i, j, k]] += scale * (xs[k] - lse).exp();
        }
        adj[[i, j, l]] -= scale;
    }
    Ok((total * scale, adj))
}

/// The two parts of the objective, weighted equally.
pub fn total_loss(bracket: f64, label: f64) -> f64 {
    bracket + label
}

/// CRF over labeled bracketings: the potential of a span is the logsumexp
/// of its label scores. Only width >= 2 gold constituents enter the gold
/// score; the adjoint at a width >= 2 cell is the span marginal times the
/// label softmax minus the gold indicator, and 0 on width-1 cells.
pub fn one_stage_crf_loss(labels: &LabelChart, gold: &[Vec<LabeledSpan>]) -> Result<LabelLoss> {
    check_gold(labels.lengths(), gold.iter().map(|g| g.len().div_ceil(2)))?;
    let agg = label_aggregate(labels, AggregateMode::LogSumExp)?.chart;
    let z = inside(&agg)?.log_z;
    let marg = marginals(&agg)?;
    let mut adj = LabelChart::zeros(labels.lengths().to_vec(), labels.num_labels())?;
    let mut losses = Vec::with_capacity(gold.len());
    for (b, g) in gold.iter().enumerate() {
        let n = labels.lengths()[b];
        for i in 0..n {
            for j in i + 1..n {
                let (p, lse) = (marg.get(b, i, j), agg.get(b, i, j));
                let xs = labels.span(b, i, j);
                for (a, x) in adj.span_mut(b, i, j).iter_mut().zip(xs) {
                    *a = p * (x - lse).exp();
                }
            }
        }
        let mut gold_score = 0.0;
        for &(i, j, l) in g.iter().filter(|(i, j, _)| j > i) {
            if j >= n || l >= labels.num_labels() {
                return Err(Error::OutOfRange(format!("gold span ({i}, {j}) label {l}")));
            }
            gold_score += labels.get(b, i, j, l);
            adj.span_mut(b, i, j)[l] -= 1.0;
        }
        losses.push(z[b] - gold_score);
    }
    Ok(LabelLoss { losses, adjoints: adj })
}

/// Structured hinge with Hamming cost: CKY over `s(i, j) + margin` on every
/// width >= 2 span not in the gold tree, then `max(0, best - score(gold))`.
/// Adjoints are the violating tree's indicators minus the gold ones.
pub fn max_margin_loss(scores: &SpanChart, gold: &[UnlabeledTree], margin: f64) -> Result<SpanLoss> {
    check_gold(scores.lengths(), gold.iter().map(|t| t.len()))?;
    let mut aug = scores.clone();
    for (b, t) in gold.iter().enumerate() {
        for i in 0..t.len() {
            for j in i + 1..t.len() {
                if !t.contains(i, j) {
                    aug.set(b, i, j, aug.get(b, i, j) + margin);
                }
            }
        }
    }
    let best = cky(&aug)?;
    let mut adj = SpanChart::zeros(scores.lengths().to_vec())?;
    let mut losses = Vec::with_capacity(gold.len());
    for (b, t) in gold.iter().enumerate() {
        let loss = (best.scores[b] - tree_score(scores, b, t)?).max(0.0);
        if loss > 0.0 {
            for (i, j) in best.trees[b].internal() {
                adj.set(b, i, j, adj.get(b, i, j) + 1.0);
            }
            for (i, j) in t.internal() {
                adj.set(b, i, j, adj.get(b, i, j) - 1.0);
            }
        }
        losses.push(loss);
    }
    Ok(SpanLoss { losses, adjoints: adj })
}

/// Hinge over labeled bracketings with a cost of `margin` per width >= 2
/// labeled span not in the gold tree; the inner maximization is CKY over the
/// per-span best augmented label.
pub fn one_stage_max_margin_loss(labels: &LabelChart, gold: &[Vec<LabeledSpan>], margin: f64) -> Result<LabelLoss> {
    check_gold(labels.lengths(), gold.iter().map(|g| g.len().div_ceil(2)))?;
    let mut aug = labels.clone();
    for (b, g) in gold.iter().enumerate() {
        let n = labels.lengths()[b];
        for i in 0..n {
            for j in i + 1..n {
                for (l, v) in aug.span_mut(b, i, j).iter_mut().enumerate() {
                    if !g.contains(&(i, j, l)) {
                        *v += margin;
                    }
                }
            }
        }
    }
    let agg = label_aggregate(&aug, AggregateMode::Max)?;
    let best = cky(&agg.chart)?;
    let mut adj = LabelChart::zeros(labels.lengths().to_vec(), labels.num_labels())?;
    let mut losses = Vec::with_capacity(gold.len());
    for (b, g) in gold.iter().enumerate() {
        let gold_score: f64 = g
            .iter()
            .filter(|(i, j, _)| j > i)
            .map(|&(i, j, l)| labels.get(b, i, j, l))
            .sum();
        let loss = (best.scores[b] - gold_score).max(0.0);
        if loss > 0.0 {
            for (i, j) in best.trees[b].internal() {
                let l = agg.best_label(b, i, j).expect("max aggregate keeps labels");
                adj.span_mut(b, i, j)[l] += 1.0;
            }
            for &(i, j, l) in g.iter().filter(|(i, j, _)| j > i) {
                adj.span_mut(b, i, j)[l] -= 1.0;
            }
        }
        losses.push(loss);
    }
    Ok(LabelLoss { losses, adjoints: adj })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{brute_labeled_log_z, brute_log_z, enumerate_trees, finite_diff, score_of};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn left_branching(n: usize) -> UnlabeledTree {
        let mut spans: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        spans.extend((1..n).map(|j| (0, j)));
        UnlabeledTree::new(n, spans).unwrap()
    }

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |_| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn crf_small_cases() {
        let r = crf_bracket_loss(
            &SpanChart::from_fn(vec![2], |_, _, _| 1.7).unwrap(),
            &[left_branching(2)],
        )
        .unwrap();
        assert_eq!(r.losses, vec![0.0]);
        assert!(r.adjoints.instance(0).iter().all(|&v| v == 0.0));

        let r = crf_bracket_loss(&SpanChart::zeros(vec![3]).unwrap(), &[left_branching(3)]).unwrap();
        assert!((r.losses[0] - std::f64::consts::LN_2).abs() < 1e-15);
        let a = r.adjoints.instance(0);
        assert!((a[[1, 2]] - 0.5).abs() < 1e-15 && (a[[0, 1]] + 0.5).abs() < 1e-15);
        assert!(a[[0, 2]].abs() < 1e-15);
    }

    #[test]
    fn crf_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_matrix(5, &mut rng);
        let gold = enumerate_trees(5).unwrap().trees[6].clone();
        let r = crf_bracket_loss(
            &SpanChart::from_matrices(std::slice::from_ref(&m)).unwrap(),
            std::slice::from_ref(&gold),
        )
        .unwrap();
        let f = |v: &[f64]| {
            let s = Array2::from_shape_vec((5, 5), v.to_vec()).unwrap();
            brute_log_z(&s).unwrap() - score_of(&s, &gold)
        };
        assert!((r.losses[0] - f(m.as_slice().unwrap())).abs() < 1e-12);
        let fd = finite_diff(f, m.as_slice().unwrap(), 1e-5).unwrap();
        let a = r.adjoints.instance(0);
        for i in 0..5 {
            for j in 0..5 {
                let want = if j > i { fd[i * 5 + j] } else { 0.0 };
                assert!((a[[i, j]] - want).abs() < 1e-5, "({i},{j}) {} vs {want}", a[[i, j]]);
            }
        }
    }

    #[test]
    fn label_loss_cases() {
        let one = Array3::from_elem((2, 2, 1), 3.0);
        let (l, a) = label_loss(one.view(), &[(0, 1, 0), (0, 0, 0), (1, 1, 0)]).unwrap();
        assert_eq!(l, 0.0);
        assert!(a.iter().all(|&v| v == 0.0));
        let two = Array3::zeros((2, 2, 2));
        let (l, _) = label_loss(two.view(), &[(0, 1, 1), (0, 0, 0), (1, 1, 1)]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(label_loss(two.view(), &[(0, 1, 2)]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = Array3::from_shape_fn((3, 3, 4), |_| rng.gen_range(-2.0..2.0));
        let gold = [(0, 2, 1), (0, 0, 3), (1, 2, 0), (1, 1, 2), (2, 2, 2)];
        let (_, a) = label_loss(s.view(), &gold).unwrap();
        let fd = finite_diff(
            |v| {
                label_loss(ArrayView3::from_shape((3, 3, 4), v).unwrap(), &gold)
                    .unwrap()
                    .0
            },
            s.as_slice().unwrap(),
            1e-5,
        )
        .unwrap();
        for (x, y) in a.iter().zip(&fd) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn unknown_gold_label() {
        let t = crate::treebank::binarize_cnf(
            &crate::treebank::parse_bracketed("(S (NP a) (VP b))").unwrap(),
            crate::treebank::Direction::Left,
        );
        let v = LabelVocab::from(vec!["S".to_string(), "NP".to_string()]);
        assert!(matches!(gold_spans(&t, &v), Err(Error::UnknownLabel(l)) if l == "VP"));
    }

    #[test]
    fn totals() {
        assert_eq!(total_loss(0.0, 0.0), 0.0);
        assert_eq!(total_loss(std::f64::consts::LN_2, 0.0), std::f64::consts::LN_2);
        assert_eq!(total_loss(1.25, 2.5), 3.75);
    }

    fn labeled(t: &UnlabeledTree, rng: &mut ChaCha8Rng, nl: usize) -> Vec<LabeledSpan> {
        t.spans().iter().map(|&(i, j)| (i, j, rng.gen_range(0..nl))).collect()
    }

    #[test]
    fn one_stage_with_one_label_is_the_bracket_crf() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 2..=7 {
            let m = random_matrix(n, &mut rng);
            let trees = enumerate_trees(n).unwrap().trees;
            let gold = trees[rng.gen_range(0..trees.len())].clone();
            let two = crf_bracket_loss(
                &SpanChart::from_matrices(std::slice::from_ref(&m)).unwrap(),
                std::slice::from_ref(&gold),
            )
            .unwrap();
            let lc = LabelChart::from_fn(vec![n], 1, |_, i, j, _| m[[i, j]]).unwrap();
            let one = one_stage_crf_loss(&lc, &[labeled(&gold, &mut rng, 1)]).unwrap();
            assert!((one.losses[0] - two.losses[0]).abs() < 1e-12);
            for i in 0..n {
                for j in i..n {
                    assert!((one.adjoints.get(0, i, j, 0) - two.adjoints.get(0, i, j)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn one_stage_matches_joint_enumeration() {
        let lc = LabelChart::zeros(vec![2], 2).unwrap();
        let r = one_stage_crf_loss(&lc, &[vec![(0, 1, 0), (0, 0, 1), (1, 1, 1)]]).unwrap();
        assert!((r.losses[0] - std::f64::consts::LN_2).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = Array3::from_shape_fn((4, 4, 3), |_| rng.gen_range(-1.5..1.5));
        let lc = LabelChart::from_grids(std::slice::from_ref(&g)).unwrap();
        let gold = labeled(&enumerate_trees(4).unwrap().trees[3], &mut rng, 3);
        let r = one_stage_crf_loss(&lc, std::slice::from_ref(&gold)).unwrap();
        let f = |v: &[f64]| {
            let g = Array3::from_shape_vec((4, 4, 3), v.to_vec()).unwrap();
            let gs: f64 = gold
                .iter()
                .filter(|(i, j, _)| j > i)
                .map(|&(i, j, l)| g[[i, j, l]])
                .sum();
            brute_labeled_log_z(&g).unwrap() - gs
        };
        assert!((r.losses[0] - f(g.as_slice().unwrap())).abs() < 1e-9);
        let fd = finite_diff(f, g.as_slice().unwrap(), 1e-5).unwrap();
        for ((i, j, l), &want) in ndarray::indices((4, 4, 3)).into_iter().zip(&fd) {
            let got = if j >= i { r.adjoints.get(0, i, j, l) } else { 0.0 };
            assert!((got - want).abs() < 1e-5, "({i},{j},{l}) {got} vs {want}");
        }
    }

    #[test]
    fn max_margin_cases() {
        let r = max_margin_loss(&SpanChart::zeros(vec![3]).unwrap(), &[left_branching(3)], 1.0).unwrap();
        assert_eq!(r.losses, vec![1.0]);
        let a = r.adjoints.instance(0);
        assert_eq!((a[[1, 2]], a[[0, 1]], a[[0, 2]]), (1.0, -1.0, 0.0));

        let dominant = SpanChart::from_fn(vec![3], |_, i, j| if (i, j) == (0, 1) { 5.0 } else { 0.0 }).unwrap();
        let r = max_margin_loss(&dominant, &[left_branching(3)], 1.0).unwrap();
        assert_eq!(r.losses, vec![0.0]);
        assert!(r.adjoints.instance(0).iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trees = enumerate_trees(5).unwrap().trees;
        for _ in 0..20 {
            let m = random_matrix(5, &mut rng);
            let gold = trees[rng.gen_range(0..14)].clone();
            let r = max_margin_loss(
                &SpanChart::from_matrices(std::slice::from_ref(&m)).unwrap(),
                std::slice::from_ref(&gold),
                1.0,
            )
            .unwrap();
            let gs = score_of(&m, &gold);
            let best = trees
                .iter()
                .map(|t| score_of(&m, t) + t.internal().filter(|&(i, j)| !gold.contains(i, j)).count() as f64)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((r.losses[0] - (best - gs).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_stage_max_margin_small() {
        let lc = LabelChart::zeros(vec![3], 2).unwrap();
        let gold = vec![(0, 2, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1), (2, 2, 1)];
        let r = one_stage_max_margin_loss(&lc, &[gold], 1.0).unwrap();
        // the best violator misses the gold on both internal spans
        assert_eq!(r.losses, vec![2.0]);
        let s: f64 = (0..3)
            .flat_map(|i| (i..3).map(move |j| (i, j)))
            .map(|(i, j)| r.adjoints.span(0, i, j).iter().sum::<f64>())
            .sum();
        assert_eq!(s, 0.0);
    }
}
