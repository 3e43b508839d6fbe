//! Log-semiring inside pass and its adjoint.

use crate::error::Result;

use super::{Lane, SpanChart, TileDp, LANES};

const NEG_INF: f64 = f64::NEG_INFINITY;

pub struct InsideResult {
    /// `log Z` per instance.
    pub log_z: Vec<f64>,
    /// Inside values; padding cells hold `-inf`.
    pub chart: SpanChart,
}

/// Forward state kept for the adjoint pass: per tile, the DP chart and the
/// logsumexp over split points of every span before its own score is added.
pub(crate) struct Tape {
    tiles: Vec<(TileDp, Vec<Lane>)>,
}

pub(crate) fn inside_with_tape(scores: &SpanChart) -> Result<(InsideResult, Tape)> {
    let big_n = scores.max_len();
    let mut tiles = Vec::with_capacity(scores.num_tiles());
    let mut out = Vec::with_capacity(scores.num_tiles());
    let mut log_z = Vec::with_capacity(scores.batch_size());
    for t in 0..scores.num_tiles() {
        let lens = scores.tile_lengths(t);
        let n = lens.iter().copied().max().unwrap_or(0);
        let mut dp = TileDp::new(n, &lens);
        let mut inner = vec![[NEG_INF; LANES]; n * n];
        for w in 1..n {
            for i in 0..n - w {
                let j = i + w;
                let (left, right) = dp.operands(i, j);
                let mut mx = [NEG_INF; LANES];
                for (x, y) in left.iter().zip(right) {
                    for k in 0..LANES {
                        let v = x[k] + y[k];
                        mx[k] = if v > mx[k] { v } else { mx[k] };
                    }
                }
                for m in mx.iter_mut() {
                    if *m == NEG_INF {
                        *m = 0.0;
                    }
                }
                let mut sum = [0.0; LANES];
                for (x, y) in left.iter().zip(right) {
                    for k in 0..LANES {
                        sum[k] += (x[k] + y[k] - mx[k]).exp();
                    }
                }
                let sc = scores.bracket_lane(t, &lens, i, j)?;
                let mut lse = [0.0; LANES];
                let mut v = [0.0; LANES];
                for k in 0..LANES {
                    lse[k] = mx[k] + sum[k].ln();
                    v[k] = lse[k] + sc[k];
                }
                inner[i * n + j] = lse;
                dp.store(i, j, v);
            }
        }
        for (lane, &len) in lens.iter().enumerate().filter(|(_, &len)| len > 0) {
            log_z.push(dp.get(0, len - 1)[lane]);
        }
        out.push(pad_tile(&dp.rows, n, big_n, NEG_INF));
        tiles.push((dp, inner));
    }
    let chart = scores.with_tiles(out);
    Ok((InsideResult { log_z, chart }, Tape { tiles }))
}

/// Re-lays an `n x n` tile into the chart-wide `big_n x big_n` shape.
fn pad_tile(src: &[Lane], n: usize, big_n: usize, fill: f64) -> Vec<Lane> {
    if n == big_n {
        return src.to_vec();
    }
    let mut dst = vec![[fill; LANES]; big_n * big_n];
    for i in 0..n {
        dst[i * big_n..i * big_n + n].copy_from_slice(&src[i * n..(i + 1) * n]);
    }
    dst
}

/// Computes `log Z` for every instance with the width-synchronous recursion
///
/// ```text
/// S[i][i] = 0
/// S[i][j] = logsumexp_{i <= r < j} (S[i][r] + S[r+1][j]) + s(i, j)
/// ```
///
/// returning `S[0][n-1]`.
pub fn inside(scores: &SpanChart) -> Result<InsideResult> {
    inside_with_tape(scores).map(|(r, _)| r)
}

/// Span marginals `p((i, j) | x) = d log Z / d s(i, j)`, obtained by running
/// the inside recursion backwards: the adjoint of each logsumexp is handed to
/// its summands in proportion to their softmax weights. Width-1 cells are
/// reported as 1 and padding as 0.
pub fn marginals(scores: &SpanChart) -> Result<SpanChart> {
    let (_, tape) = inside_with_tape(scores)?;
    Ok(backward(scores, &tape))
}

pub(crate) fn backward(scores: &SpanChart, tape: &Tape) -> SpanChart {
    let big_n = scores.max_len();
    let mut out = Vec::with_capacity(tape.tiles.len());
    for (t, (dp, inner)) in tape.tiles.iter().enumerate() {
        let lens = scores.tile_lengths(t);
        let n = dp.n;
        let mut grad = vec![[0.0; LANES]; n * n];
        for (lane, &len) in lens.iter().enumerate().filter(|(_, &len)| len > 0) {
            grad[len - 1][lane] = 1.0;
        }
        for w in (1..n).rev() {
            for i in 0..n - w {
                let j = i + w;
                let g = grad[i * n + j];
                let lse = inner[i * n + j];
                let (left, right) = dp.operands(i, j);
                for (k, (x, y)) in left.iter().zip(right).enumerate() {
                    let r = i + k;
                    let mut gp = [0.0; LANES];
                    for l in 0..LANES {
                        // a span whose splits are all forbidden passes nothing down
                        if lse[l] > NEG_INF {
                            gp[l] = g[l] * (x[l] + y[l] - lse[l]).exp();
                        }
                    }
                    for l in 0..LANES {
                        grad[i * n + r][l] += gp[l];
                        grad[(r + 1) * n + j][l] += gp[l];
                    }
                }
            }
        }
        for (lane, &len) in lens.iter().enumerate() {
            for i in 0..len {
                grad[i * n + i][lane] = 1.0;
            }
        }
        out.push(pad_tile(&grad, n, big_n, 0.0));
    }
    scores.with_tiles(out)
}
