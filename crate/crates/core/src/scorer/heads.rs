//! Boundary projections and the span/label scoring forms.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};

use super::params::{MinusHead, Mlp};

pub const LEAKY_SLOPE: f64 = 0.1;

#[inline]
fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
fn leaky_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

#[derive(Clone, Debug)]
pub(crate) struct MlpTape {
    z: Array2<f64>,
    mask: Option<Array1<f64>>,
}

/// `leaky(h W^T + b)`, row by row, times an optional per-unit mask.
pub(crate) fn mlp_forward(m: &Mlp, h: ArrayView2<f64>, mask: Option<Array1<f64>>) -> (Array2<f64>, MlpTape) {
    let z = h.dot(&m.w.t()) + &m.b;
    let mut out = z.mapv(leaky);
    if let Some(mk) = &mask {
        out *= mk;
    }
    (out, MlpTape { z, mask })
}

/// Returns the gradient w.r.t. `h`.
pub(crate) fn mlp_backward(
    m: &Mlp,
    h: ArrayView2<f64>,
    tape: &MlpTape,
    dout: &Array2<f64>,
    grad: &mut Mlp,
) -> Array2<f64> {
    let mut dz = dout * &tape.z.mapv(leaky_grad);
    if let Some(mk) = &tape.mask {
        dz *= mk;
    }
    grad.w += &dz.t().dot(&h);
    grad.b += &dz.sum_axis(Axis(0));
    dz.dot(&m.w)
}

/// `s(i, j) = [l_i; 1]^T W r_j` for every pair.
pub(crate) fn biaffine(l: &Array2<f64>, w: ArrayView2<f64>, r: &Array2<f64>) -> Array2<f64> {
    let d = l.ncols();
    let la = l.dot(&w.slice(s![..d, ..])) + w.row(d);
    la.dot(&r.t())
}

/// Gradients of a biaffine form given the score adjoints `ds`; returns
/// `(dl, dr)` and accumulates into `dw`.
pub(crate) fn biaffine_backward(
    l: &Array2<f64>,
    w: ArrayView2<f64>,
    r: &Array2<f64>,
    ds: ArrayView2<f64>,
    mut dw: ndarray::ArrayViewMut2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let d = l.ncols();
    let top = w.slice(s![..d, ..]);
    let g = ds.dot(r);
    dw.slice_mut(s![..d, ..]).scaled_add(1.0, &l.t().dot(&g));
    dw.row_mut(d).scaled_add(1.0, &g.sum_axis(Axis(0)));
    let la = l.dot(&top) + w.row(d);
    (g.dot(&top.t()), ds.t().dot(&la))
}

/// `s(i, j, l)` for every pair and label, `n x n x L`.
pub(crate) fn label_biaffine(l: &Array2<f64>, w: &Array3<f64>, r: &Array2<f64>) -> Array3<f64> {
    let n = l.nrows();
    let mut out = Array3::zeros((n, n, w.dim().0));
    for (k, wk) in w.outer_iter().enumerate() {
        out.slice_mut(s![.., .., k]).assign(&biaffine(l, wk, r));
    }
    out
}

pub(crate) fn label_biaffine_backward(
    l: &Array2<f64>,
    w: &Array3<f64>,
    r: &Array2<f64>,
    ds: &Array3<f64>,
    dw: &mut Array3<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let mut dl = Array2::zeros(l.raw_dim());
    let mut dr = Array2::zeros(r.raw_dim());
    for (k, wk) in w.outer_iter().enumerate() {
        let (a, b) = biaffine_backward(l, wk, r, ds.slice(s![.., .., k]), dw.index_axis_mut(Axis(0), k));
        dl += &a;
        dr += &b;
    }
    (dl, dr)
}

#[derive(Clone, Debug)]
pub(crate) struct MinusTape {
    /// `h W^T`, one row per position.
    p: Array2<f64>,
}

/// `s(i, j) = w2 . leaky(W (h_i - h_j) + b) + b2` for every pair.
pub(crate) fn minus_forward(m: &MinusHead, h: ArrayView2<f64>) -> (Array2<f64>, MinusTape) {
    let n = h.nrows();
    let p = h.dot(&m.hidden.w.t());
    let d = p.ncols();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = m.out_b[0];
            for k in 0..d {
                acc += m.out_w[k] * leaky(p[[i, k]] - p[[j, k]] + m.hidden.b[k]);
            }
            out[[i, j]] = acc;
        }
    }
    (out, MinusTape { p })
}

pub(crate) fn minus_backward(
    m: &MinusHead,
    h: ArrayView2<f64>,
    tape: &MinusTape,
    ds: ArrayView2<f64>,
    grad: &mut MinusHead,
) -> Array2<f64> {
    let n = h.nrows();
    let p = &tape.p;
    let d = p.ncols();
    let mut dp = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..n {
            let g = ds[[i, j]];
            if g == 0.0 {
                continue;
            }
            grad.out_b[0] += g;
            for k in 0..d {
                let z = p[[i, k]] - p[[j, k]] + m.hidden.b[k];
                grad.out_w[k] += g * leaky(z);
                let dz = g * m.out_w[k] * leaky_grad(z);
                grad.hidden.b[k] += dz;
                dp[[i, k]] += dz;
                dp[[j, k]] -= dz;
            }
        }
    }
    grad.hidden.w += &dp.t().dot(&h);
    dp.dot(&m.hidden.w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_biaffine() {
        let l = Array2::from_shape_vec((1, 2), vec![1.0, 0.0]).unwrap();
        let r = Array2::from_shape_vec((1, 2), vec![0.0, 1.0]).unwrap();
        let mut w = Array2::zeros((3, 2));
        w[[0, 1]] = 3.0;
        assert_eq!(biaffine(&l, w.view(), &r)[[0, 0]], 3.0);
        w[[2, 1]] = 0.5;
        assert_eq!(biaffine(&l, w.view(), &r)[[0, 0]], 3.5);
    }

    #[test]
    fn biaffine_matches_scalar_loop() {
        let (n, d) = (4, 3);
        let l = Array2::from_shape_fn((n, d), |(i, k)| (i as f64 - k as f64) * 0.37);
        let r = Array2::from_shape_fn((n, d), |(i, k)| ((i * k) as f64).sin());
        let w = Array2::from_shape_fn((d + 1, d), |(a, b)| (a as f64 * 0.5 - b as f64).cos());
        let s = biaffine(&l, w.view(), &r);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for a in 0..=d {
                    let la = if a < d { l[[i, a]] } else { 1.0 };
                    for b in 0..d {
                        acc += la * w[[a, b]] * r[[j, b]];
                    }
                }
                assert!((acc - s[[i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn minus_diagonal_is_constant() {
        let mut m = MinusHead {
            hidden: Mlp::zeros(3, 2),
            out_w: Array1::from(vec![1.0, -2.0]),
            out_b: Array1::from(vec![0.25]),
        };
        m.hidden.w.fill(0.3);
        m.hidden.b[0] = -1.0;
        let h = Array2::from_shape_fn((3, 3), |(i, k)| (i + k) as f64);
        let (s, _) = minus_forward(&m, h.view());
        // leaky(-1) * 1 + leaky(0) * -2 + 0.25
        for i in 0..3 {
            assert!((s[[i, i]] - (-0.1 + 0.25)).abs() < 1e-15);
        }
    }
}
