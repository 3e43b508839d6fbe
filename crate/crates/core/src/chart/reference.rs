//! Conventional one-sentence-at-a-time CKY and inside, used as the baseline
//! when measuring what batching buys.

use ndarray::Array2;

use super::UnlabeledTree;

/// CKY over one `n x n` score matrix (upper triangle, width >= 2 read).
/// Same tie-breaking as the batched kernel.
pub fn cky_unbatched(scores: &Array2<f64>) -> (UnlabeledTree, f64) {
    let n = scores.nrows();
    let mut chart = vec![vec![0.0f64; n]; n];
    let mut split = vec![vec![0usize; n]; n];
    for w in 1..n {
        for i in 0..n - w {
            let j = i + w;
            let mut best = f64::NEG_INFINITY;
            let mut arg = i;
            for r in i..j {
                let v = chart[i][r] + chart[r + 1][j];
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            chart[i][j] = best + scores[[i, j]];
            split[i][j] = arg;
        }
    }
    let tree = UnlabeledTree::from_splits(n, |i, j| split[i][j]);
    (tree, chart[0][n - 1])
}

/// `log Z` of one sentence.
pub fn inside_unbatched(scores: &Array2<f64>) -> f64 {
    let n = scores.nrows();
    let mut chart = vec![vec![0.0f64; n]; n];
    for w in 1..n {
        for i in 0..n - w {
            let j = i + w;
            let m = (i..j)
                .map(|r| chart[i][r] + chart[r + 1][j])
                .fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = (i..j).map(|r| (chart[i][r] + chart[r + 1][j] - m).exp()).sum();
            chart[i][j] = m + s.ln() + scores[[i, j]];
        }
    }
    chart[0][n - 1]
}
