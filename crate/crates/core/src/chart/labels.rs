use ndarray::Array3;

use crate::error::{Error, Result};

use super::SpanChart;

/// Per-span label scores for a batch, `[b][i][j][l]` with labels innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelChart {
    n: usize,
    num_labels: usize,
    lengths: Vec<usize>,
    values: Vec<f64>,
}

impl LabelChart {
    pub fn zeros(lengths: Vec<usize>, num_labels: usize) -> Result<Self> {
        if lengths.contains(&0) {
            return Err(Error::EmptySentence);
        }
        let n = lengths.iter().copied().max().unwrap_or(0);
        Ok(LabelChart {
            n,
            num_labels,
            values: vec![0.0; lengths.len() * n * n * num_labels],
            lengths,
        })
    }

    pub fn from_fn(
        lengths: Vec<usize>,
        num_labels: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut c = Self::zeros(lengths, num_labels)?;
        for b in 0..c.lengths.len() {
            for i in 0..c.lengths[b] {
                for j in i..c.lengths[b] {
                    for l in 0..num_labels {
                        c.set(b, i, j, l, f(b, i, j, l));
                    }
                }
            }
        }
        Ok(c)
    }

    /// Packs per-sentence `n x n x L` grids.
    pub fn from_grids(grids: &[Array3<f64>]) -> Result<Self> {
        let num_labels = grids.first().map_or(0, |g| g.dim().2);
        let mut lengths = Vec::with_capacity(grids.len());
        for g in grids {
            let (a, b, l) = g.dim();
            if a != b || l != num_labels {
                return Err(Error::Shape(format!("{a}x{b}x{l} label grid")));
            }
            lengths.push(a);
        }
        Self::from_fn(lengths, num_labels, |b, i, j, l| grids[b][[i, j, l]])
    }

    #[inline]
    fn offset(&self, b: usize, i: usize, j: usize) -> usize {
        ((b * self.n + i) * self.n + j) * self.num_labels
    }

    #[inline]
    pub fn get(&self, b: usize, i: usize, j: usize, l: usize) -> f64 {
        self.values[self.offset(b, i, j) + l]
    }

    #[inline]
    pub fn set(&mut self, b: usize, i: usize, j: usize, l: usize, v: f64) {
        let o = self.offset(b, i, j) + l;
        self.values[o] = v;
    }

    /// All label scores of one span.
    pub fn span(&self, b: usize, i: usize, j: usize) -> &[f64] {
        let o = self.offset(b, i, j);
        &self.values[o..o + self.num_labels]
    }

    pub fn span_mut(&mut self, b: usize, i: usize, j: usize) -> &mut [f64] {
        let o = self.offset(b, i, j);
        &mut self.values[o..o + self.num_labels]
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn batch_size(&self) -> usize {
        self.lengths.len()
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// Instance `b` as an `n_b x n_b x L` grid.
    pub fn instance(&self, b: usize) -> Array3<f64> {
        let n = self.lengths[b];
        Array3::from_shape_fn((n, n, self.num_labels), |(i, j, l)| self.get(b, i, j, l))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggregateMode {
    LogSumExp,
    Max,
}

pub struct Aggregate {
    pub chart: SpanChart,
    /// Best label per cell, laid out like the chart, for [`AggregateMode::Max`].
    pub argmax: Option<Vec<Vec<usize>>>,
}

impl Aggregate {
    /// Best label of span `(i, j)` in instance `b`.
    pub fn best_label(&self, b: usize, i: usize, j: usize) -> Option<usize> {
        let n = self.chart.lengths()[b];
        self.argmax.as_ref().map(|a| a[b][i * n + j])
    }
}

pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// First index of the maximum.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = k;
        }
    }
    best
}

/// Reduces label scores to one potential per span: `logsumexp` gives the
/// span potential of the one-stage CRF, `max` (with the argmax kept) the one
/// used by one-stage CKY.
pub fn label_aggregate(labels: &LabelChart, mode: AggregateMode) -> Result<Aggregate> {
    if labels.num_labels() == 0 {
        return Err(Error::EmptyLabelSet);
    }
    let mut chart = SpanChart::zeros(labels.lengths().to_vec())?;
    let mut arg = Vec::new();
    for (b, &len) in labels.lengths().iter().enumerate() {
        let mut best = vec![0usize; len * len];
        for i in 0..len {
            for j in i..len {
                let xs = labels.span(b, i, j);
                let v = match mode {
                    AggregateMode::LogSumExp => logsumexp(xs),
                    AggregateMode::Max => {
                        let k = argmax(xs);
                        best[i * len + j] = k;
                        xs[k]
                    }
                };
                chart.set(b, i, j, v);
            }
        }
        arg.push(best);
    }
    Ok(Aggregate {
        chart,
        argmax: (mode == AggregateMode::Max).then_some(arg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_label_is_identity() {
        let l = LabelChart::from_fn(vec![3], 1, |_, i, j, _| (i * 3 + j) as f64).unwrap();
        for mode in [AggregateMode::LogSumExp, AggregateMode::Max] {
            let a = label_aggregate(&l, mode).unwrap();
            for i in 0..3 {
                for j in i..3 {
                    assert_eq!(a.chart.get(0, i, j), (i * 3 + j) as f64);
                }
            }
        }
    }

    #[test]
    fn two_zero_labels() {
        let l = LabelChart::zeros(vec![2], 2).unwrap();
        let lse = label_aggregate(&l, AggregateMode::LogSumExp).unwrap();
        assert!((lse.chart.get(0, 0, 1) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(lse.argmax.is_none());
        let mx = label_aggregate(&l, AggregateMode::Max).unwrap();
        assert_eq!(mx.chart.get(0, 0, 1), 0.0);
        assert_eq!(mx.best_label(0, 0, 1), Some(0));
    }

    #[test]
    fn empty_label_set() {
        let l = LabelChart::zeros(vec![2], 0).unwrap();
        assert!(matches!(
            label_aggregate(&l, AggregateMode::Max),
            Err(Error::EmptyLabelSet)
        ));
    }
}
