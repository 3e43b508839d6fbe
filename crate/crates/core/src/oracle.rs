//! Brute-force references: enumerate every bracketing and compute partition
//! functions, marginals and maxima directly. Nothing here calls into the
//! dynamic programs of [`crate::chart`].

use ndarray::{Array2, Array3};

use crate::chart::UnlabeledTree;
use crate::error::{Error, Result};

/// Default enumeration cap: Catalan(11) = 58,786 trees.
pub const MAX_ENUM_LEN: usize = 12;

pub struct TreeEnumeration {
    pub n: usize,
    pub trees: Vec<UnlabeledTree>,
}

fn spans_between(i: usize, j: usize) -> Vec<Vec<(usize, usize)>> {
    if i == j {
        return vec![vec![(i, i)]];
    }
    let mut out = Vec::new();
    for r in i..j {
        let lefts = spans_between(i, r);
        let rights = spans_between(r + 1, j);
        for l in &lefts {
            for rt in &rights {
                let mut s = Vec::with_capacity(l.len() + rt.len() + 1);
                s.push((i, j));
                s.extend_from_slice(l);
                s.extend_from_slice(rt);
                out.push(s);
            }
        }
    }
    out
}

/// All binary bracketings of `n` words, ordered by root split point, then
/// recursively by left subtree and right subtree.
pub fn enumerate_trees(n: usize) -> Result<TreeEnumeration> {
    enumerate_trees_capped(n, MAX_ENUM_LEN)
}

pub fn enumerate_trees_capped(n: usize, cap: usize) -> Result<TreeEnumeration> {
    if n == 0 || n > cap {
        return Err(Error::OutOfRange(format!(
            "tree enumeration needs 1 <= n <= {cap}, got {n}"
        )));
    }
    let trees = spans_between(0, n - 1)
        .into_iter()
        .map(|s| UnlabeledTree::new(n, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(TreeEnumeration { n, trees })
}

pub fn catalan(k: usize) -> u64 {
    (0..k as u64).fold(1u64, |c, i| c * 2 * (2 * i + 1) / (i + 2))
}

/// Sum of width >= 2 span scores.
pub fn score_of(scores: &Array2<f64>, tree: &UnlabeledTree) -> f64 {
    tree.spans()
        .iter()
        .filter(|(i, j)| j > i)
        .map(|&(i, j)| scores[[i, j]])
        .sum()
}

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_square(scores: &Array2<f64>) -> Result<usize> {
    if scores.nrows() != scores.ncols() {
        return Err(Error::Shape(format!("{:?} score matrix", scores.dim())));
    }
    Ok(scores.nrows())
}

pub fn brute_log_z(scores: &Array2<f64>) -> Result<f64> {
    let e = enumerate_trees(check_square(scores)?)?;
    let s: Vec<f64> = e.trees.iter().map(|t| score_of(scores, t)).collect();
    Ok(lse(&s))
}

/// `p((i, j))` for every span as a sum over the trees containing it.
pub fn brute_marginals(scores: &Array2<f64>) -> Result<Array2<f64>> {
    let n = check_square(scores)?;
    let e = enumerate_trees(n)?;
    let s: Vec<f64> = e.trees.iter().map(|t| score_of(scores, t)).collect();
    let z = lse(&s);
    let mut m = Array2::zeros((n, n));
    for (t, &st) in e.trees.iter().zip(&s) {
        let p = (st - z).exp();
        for &(i, j) in t.spans() {
            m[[i, j]] += p;
        }
    }
    Ok(m)
}

/// Maximum tree score and the first tree (in enumeration order) attaining it
/// within `tol`.
pub fn brute_argmax(scores: &Array2<f64>, tol: f64) -> Result<(UnlabeledTree, f64)> {
    let e = enumerate_trees(check_square(scores)?)?;
    let s: Vec<f64> = e.trees.iter().map(|t| score_of(scores, t)).collect();
    let best = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let k = s.iter().position(|&v| v >= best - tol).expect("non-empty");
    Ok((e.trees[k].clone(), best))
}

/// Enumerated maximizer of the expected number of correct spans, i.e. the
/// sum of brute-force marginals over width >= 2 spans.
pub fn brute_mbr(scores: &Array2<f64>, tol: f64) -> Result<(UnlabeledTree, f64)> {
    brute_argmax(&brute_marginals(scores)?, tol)
}

/// `log` of the sum over all (bracketing, labeling of its width >= 2 spans)
/// pairs of `exp(sum of s(i, j, l))`, by explicit enumeration of labelings.
pub fn brute_labeled_log_z(scores: &Array3<f64>) -> Result<f64> {
    let (n, n2, nl) = scores.dim();
    if n != n2 || nl == 0 {
        return Err(Error::Shape(format!("{:?} label grid", scores.dim())));
    }
    let e = enumerate_trees(n)?;
    let mut terms = Vec::new();
    for t in &e.trees {
        let spans: Vec<(usize, usize)> = t.internal().collect();
        let total = nl.pow(spans.len() as u32);
        for code in 0..total {
            let mut c = code;
            let mut s = 0.0;
            for &(i, j) in &spans {
                s += scores[[i, j, c % nl]];
                c /= nl;
            }
            terms.push(s);
        }
    }
    Ok(lse(&terms))
}

/// Central differences `(f(x + h) - f(x - h)) / 2h` per coordinate.
pub fn finite_diff(mut f: impl FnMut(&[f64]) -> f64, point: &[f64], step: f64) -> Result<Vec<f64>> {
    if step <= 0.0 || step.is_nan() {
        return Err(Error::OutOfRange(format!("finite-difference step {step}")));
    }
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let orig = x[k];
        x[k] = orig + step;
        let fp = f(&x);
        x[k] = orig - step;
        let fm = f(&x);
        x[k] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteEvaluation(k));
        }
        grad.push((fp - fm) / (2.0 * step));
    }
    Ok(grad)
}
