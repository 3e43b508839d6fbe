//! Max-product (CKY) decoding and minimum Bayes risk decoding.

use crate::error::Result;

use super::inside::marginals;
use super::{Lane, SpanChart, TileDp, UnlabeledTree, LANES};

pub struct CkyResult {
    pub trees: Vec<UnlabeledTree>,
    /// Score of each returned tree over its width >= 2 spans.
    pub scores: Vec<f64>,
}

/// Max-product recursion over one tile. Split points are kept as `f64` so
/// the select runs in the same vector registers as the scores.
#[inline(always)]
fn sweep(scores: &SpanChart, t: usize, lens: &[usize; LANES], dp: &mut TileDp, split: &mut [Lane]) -> Result<()> {
    let n = dp.n;
    for w in 1..n {
        for i in 0..n - w {
            let j = i + w;
            let (left, right) = dp.operands(i, j);
            let mut best = [f64::NEG_INFINITY; LANES];
            let mut arg = [i as f64; LANES];
            let mut r = i as f64;
            for (x, y) in left.iter().zip(right) {
                for k in 0..LANES {
                    let v = x[k] + y[k];
                    let better = v > best[k];
                    best[k] = if better { v } else { best[k] };
                    arg[k] = if better { r } else { arg[k] };
                }
                r += 1.0;
            }
            split[i * n + j] = arg;
            let sc = scores.bracket_lane(t, lens, i, j)?;
            for k in 0..LANES {
                best[k] += sc[k];
            }
            dp.store(i, j, best);
        }
    }
    Ok(())
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
fn sweep_avx2(scores: &SpanChart, t: usize, lens: &[usize; LANES], dp: &mut TileDp, split: &mut [Lane]) -> Result<()> {
    sweep(scores, t, lens, dp, split)
}

/// Picks the widest vector unit the CPU offers; the kernel body is the same.
fn max_sweep(scores: &SpanChart, t: usize, lens: &[usize; LANES], dp: &mut TileDp, split: &mut [Lane]) -> Result<()> {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { sweep_avx2(scores, t, lens, dp, split) };
    }
    sweep(scores, t, lens, dp, split)
}

/// Highest-scoring bracketing per instance. Ties between split points go to
/// the lowest one.
pub fn cky(scores: &SpanChart) -> Result<CkyResult> {
    let nb = scores.batch_size();
    let mut trees = Vec::with_capacity(nb);
    let mut best_scores = Vec::with_capacity(nb);
    let mut dp = TileDp::new(0, &[0; LANES]);
    let mut split = Vec::new();
    for t in 0..scores.num_tiles() {
        let lens = scores.tile_lengths(t);
        let n = lens.iter().copied().max().unwrap_or(0);
        dp.reset(n, &lens);
        // like the chart, every split cell is written before it is read
        split.resize(n * n, [0.0; LANES]);
        max_sweep(scores, t, &lens, &mut dp, &mut split)?;
        for (lane, &len) in lens.iter().enumerate().filter(|(_, &len)| len > 0) {
            trees.push(UnlabeledTree::from_splits(len, |i, j| split[i * n + j][lane] as usize));
            best_scores.push(dp.get(0, len - 1)[lane]);
        }
    }
    Ok(CkyResult {
        trees,
        scores: best_scores,
    })
}

/// CKY over span marginals: the bracketing with the largest expected number
/// of correct spans. The returned scores are those expected counts over
/// width >= 2 spans.
pub fn mbr_decode(scores: &SpanChart) -> Result<CkyResult> {
    cky(&marginals(scores)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_words() {
        let c = SpanChart::from_fn(vec![3], |_, i, j| match (i, j) {
            (0, 1) => 2.0,
            (1, 2) => 1.0,
            _ => 0.0,
        })
        .unwrap();
        let r = cky(&c).unwrap();
        assert_eq!(r.scores, vec![2.0]);
        assert_eq!(
            r.trees[0],
            UnlabeledTree::new(3, vec![(0, 0), (1, 1), (2, 2), (0, 1), (0, 2)]).unwrap()
        );
    }

    #[test]
    fn ties_take_lowest_split() {
        let c = SpanChart::zeros(vec![4]).unwrap();
        let r = cky(&c).unwrap();
        // root split at 0, then (1,3) split at 1
        assert_eq!(
            r.trees[0].spans(),
            &[(0, 3), (0, 0), (1, 3), (1, 1), (2, 3), (2, 2), (3, 3)]
        );
    }

    #[test]
    fn mbr_on_zero_scores() {
        let c = SpanChart::zeros(vec![3, 2]).unwrap();
        let r = mbr_decode(&c).unwrap();
        assert!(r.trees[0].contains(1, 2));
        assert!((r.scores[0] - 1.5).abs() < 1e-12);
        assert_eq!(r.trees[1].spans(), &[(0, 1), (0, 0), (1, 1)]);
    }

    #[test]
    fn single_word_and_empty_batch() {
        let r = cky(&SpanChart::zeros(vec![1]).unwrap()).unwrap();
        assert_eq!(r.trees[0].spans(), &[(0, 0)]);
        assert_eq!(r.scores, vec![0.0]);
        assert!(cky(&SpanChart::zeros(vec![]).unwrap()).unwrap().trees.is_empty());
    }
}
