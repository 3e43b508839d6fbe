//! Batched dynamic programming over span charts.
//!
//! A [`SpanChart`] holds one real value per span `(i, j)` for every sentence
//! of a batch. The batch is cut into tiles of [`LANES`] sentences and each
//! tile is stored as `[i][j][lane]`, so the kernel for one span sweeps the
//! same cell of all sentences in the tile with one vector operation. All
//! instances and all same-width spans are handled in one pass per width, and
//! a sentence of length `n` needs `n - 1` sequential steps. A tile is small
//! enough (about 25 KiB at `n = 20`) to stay in the first-level cache for
//! the whole recursion.
//!
//! Width-1 spans carry no score in the bracketing distribution: every binary
//! tree contains all of them, so their scores cancel in the normalizer.

mod cky;
mod inside;
mod labels;
pub mod reference;
mod tree;

pub use cky::{cky, mbr_decode, CkyResult};
pub use inside::{inside, marginals, InsideResult};
pub use labels::{label_aggregate, Aggregate, AggregateMode, LabelChart};
pub use tree::UnlabeledTree;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Sentences per tile.
pub const LANES: usize = 8;

pub(crate) type Lane = [f64; LANES];

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Dense per-span values for a batch of sentences of possibly different
/// lengths. Cells outside `0 <= i <= j < lengths[b]` are padding.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanChart {
    n: usize,
    lengths: Vec<usize>,
    /// `[tile][i][j][lane]`, flat.
    values: Vec<f64>,
}

impl SpanChart {
    /// A chart filled with `value`.
    pub fn filled(lengths: Vec<usize>, value: f64) -> Result<Self> {
        if lengths.contains(&0) {
            return Err(Error::EmptySentence);
        }
        let n = lengths.iter().copied().max().unwrap_or(0);
        let tiles = lengths.len().div_ceil(LANES);
        let values = vec![value; tiles * n * n * LANES];
        Ok(SpanChart { n, lengths, values })
    }

    pub fn zeros(lengths: Vec<usize>) -> Result<Self> {
        Self::filled(lengths, 0.0)
    }

    pub fn from_fn(lengths: Vec<usize>, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut c = Self::zeros(lengths)?;
        for b in 0..c.batch_size() {
            let len = c.lengths[b];
            for i in 0..len {
                for j in i..len {
                    c.set(b, i, j, f(b, i, j));
                }
            }
        }
        Ok(c)
    }

    /// Packs square per-sentence matrices; only the upper triangle is read.
    pub fn from_matrices(mats: &[Array2<f64>]) -> Result<Self> {
        let mut lengths = Vec::with_capacity(mats.len());
        for m in mats {
            if m.nrows() != m.ncols() {
                return Err(Error::Shape(format!("{}x{} score matrix", m.nrows(), m.ncols())));
            }
            lengths.push(m.nrows());
        }
        let mut c = Self::zeros(lengths)?;
        let n = c.n;
        for (b, m) in mats.iter().enumerate() {
            let len = m.nrows();
            let dense = m.as_standard_layout();
            let src = dense.as_slice().expect("standard layout");
            let tile = &mut c.values[(b / LANES) * n * n * LANES..];
            for i in 0..len {
                let row = &src[i * len..(i + 1) * len];
                let dst = &mut tile[i * n * LANES + b % LANES..];
                for j in i..len {
                    dst[j * LANES] = row[j];
                }
            }
        }
        Ok(c)
    }

    #[inline]
    fn index(&self, b: usize, i: usize, j: usize) -> usize {
        (((b / LANES) * self.n + i) * self.n + j) * LANES + b % LANES
    }

    #[inline]
    fn lanes(&self) -> &[Lane] {
        self.values.as_chunks().0
    }

    #[inline]
    #[allow(dead_code)]
    fn lanes_mut(&mut self) -> &mut [Lane] {
        self.values.as_chunks_mut().0
    }

    #[inline]
    pub fn get(&self, b: usize, i: usize, j: usize) -> f64 {
        self.values[self.index(b, i, j)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, i: usize, j: usize, v: f64) {
        let k = self.index(b, i, j);
        self.values[k] = v;
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn batch_size(&self) -> usize {
        self.lengths.len()
    }

    /// Longest sentence in the batch.
    pub fn max_len(&self) -> usize {
        self.n
    }

    /// Copy of instance `b` as an `n_b x n_b` matrix.
    pub fn instance(&self, b: usize) -> Array2<f64> {
        let n = self.lengths[b];
        Array2::from_shape_fn((n, n), |(i, j)| self.get(b, i, j))
    }

    /// A new chart holding the given instances in the given order.
    pub fn select(&self, order: &[usize]) -> SpanChart {
        let lengths = order.iter().map(|&b| self.lengths[b]).collect();
        SpanChart::from_fn(lengths, |k, i, j| self.get(order[k], i, j)).expect("lengths are positive")
    }

    #[cfg(test)]
    pub(crate) fn raw(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    pub(crate) fn num_tiles(&self) -> usize {
        self.lengths.len().div_ceil(LANES)
    }

    /// Sentence lengths of tile `t`; lanes past the end of the batch get 0.
    pub(crate) fn tile_lengths(&self, t: usize) -> [usize; LANES] {
        let mut out = [0; LANES];
        for (lane, o) in out.iter_mut().enumerate() {
            *o = self.lengths.get(t * LANES + lane).copied().unwrap_or(0);
        }
        out
    }

    /// Scores of span `(i, j)`, `j > i`, across tile `t` with padding lanes
    /// set to `-inf`. NaN and `+inf` in a meaningful cell are rejected;
    /// `-inf` forbids the span and is allowed.
    #[inline(always)]
    pub(crate) fn bracket_lane(&self, t: usize, lens: &[usize; LANES], i: usize, j: usize) -> Result<Lane> {
        let v = self.lanes()[(t * self.n + i) * self.n + j];
        let mut out = [NEG_INF; LANES];
        let mut bad = false;
        for lane in 0..LANES {
            let live = j < lens[lane];
            let x = v[lane];
            bad |= live & (x.is_nan() | (x == f64::INFINITY));
            out[lane] = if live { x } else { NEG_INF };
        }
        if bad {
            let lane = (0..LANES)
                .find(|&l| j < lens[l] && (v[l].is_nan() || v[l] == f64::INFINITY))
                .expect("a bad lane exists");
            return Err(Error::InvalidScore {
                batch: t * LANES + lane,
                start: i,
                end: j,
                value: v[lane],
            });
        }
        Ok(out)
    }

    /// A chart of the same shape over the given tiles.
    pub(crate) fn with_tiles(&self, tiles: Vec<Vec<Lane>>) -> SpanChart {
        let values: Vec<f64> = tiles.into_iter().flatten().flatten().collect();
        debug_assert_eq!(values.len(), self.values.len());
        SpanChart {
            n: self.n,
            lengths: self.lengths.clone(),
            values,
        }
    }
}

/// DP working storage for one tile: the chart by rows (`[i][j]`) and a
/// transposed copy (`[j][i]`), so both operands of a split run contiguously.
pub(crate) struct TileDp {
    pub n: usize,
    pub rows: Vec<Lane>,
    pub cols: Vec<Lane>,
}

impl TileDp {
    /// 0 on meaningful diagonal cells, `-inf` everywhere else.
    pub fn new(n: usize, lens: &[usize; LANES]) -> Self {
        let mut dp = TileDp {
            n: 0,
            rows: Vec::new(),
            cols: Vec::new(),
        };
        dp.reset(n, lens);
        dp
    }

    /// Reinitializes in place for another tile. Only the diagonal is reset:
    /// a sweep writes every cell above it before reading it, so stale values
    /// left from the previous tile are never seen.
    pub fn reset(&mut self, n: usize, lens: &[usize; LANES]) {
        self.n = n;
        for buf in [&mut self.rows, &mut self.cols] {
            buf.resize(n * n, [NEG_INF; LANES]);
            for i in 0..n {
                buf[i * n + i] = lens.map(|len| if i < len { 0.0 } else { NEG_INF });
            }
        }
    }

    /// `S[i][r]` and `S[r + 1][j]` for `r = i..j`.
    #[inline]
    pub fn operands(&self, i: usize, j: usize) -> (&[Lane], &[Lane]) {
        let n = self.n;
        (
            &self.rows[i * n + i..i * n + j],
            &self.cols[j * n + i + 1..j * n + j + 1],
        )
    }

    #[inline]
    pub fn store(&mut self, i: usize, j: usize, v: Lane) {
        self.rows[i * self.n + j] = v;
        self.cols[j * self.n + i] = v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &Lane {
        &self.rows[i * self.n + j]
    }
}

/// Sum of the scores of the width >= 2 spans of `tree` under instance `b`.
pub fn tree_score(scores: &SpanChart, b: usize, tree: &UnlabeledTree) -> Result<f64> {
    let len = *scores
        .lengths()
        .get(b)
        .ok_or_else(|| Error::OutOfRange(format!("no instance {b} in the batch")))?;
    if tree.len() != len {
        return Err(Error::Shape(format!(
            "tree over {} words scored against an instance of length {len}",
            tree.len()
        )));
    }
    Ok(tree
        .spans()
        .iter()
        .filter(|(i, j)| j > i)
        .map(|&(i, j)| scores.get(b, i, j))
        .sum())
}
