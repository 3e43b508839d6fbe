//! One direction of a recurrent layer with reverse-mode gradients.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::params::LstmParams;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one run, in processing order.
#[derive(Clone, Debug)]
pub(crate) struct LstmTape {
    x: Array2<f64>,
    /// Previous state as fed to the recurrent matrix (after its mask).
    h_prev: Array2<f64>,
    /// Post-activation gates `i, f, g, o`.
    gates: Array2<f64>,
    c: Array2<f64>,
    pub h: Array2<f64>,
    h_mask: Option<Array1<f64>>,
}

/// Runs the cell over the rows of `x` from first to last, starting from a
/// zero state. `h_mask` multiplies the recurrent input at every step.
pub(crate) fn forward(p: &LstmParams, x: ArrayView2<f64>, h_mask: Option<Array1<f64>>) -> LstmTape {
    let n = x.nrows();
    let hd = p.hidden();
    let xw = x.dot(&p.w_ih.t()) + &p.b;
    let mut gates = Array2::zeros((n, 4 * hd));
    let mut c = Array2::zeros((n, hd));
    let mut h = Array2::zeros((n, hd));
    let mut h_prev = Array2::zeros((n, hd));
    let mut hp = Array1::<f64>::zeros(hd);
    let mut cp = Array1::<f64>::zeros(hd);
    for t in 0..n {
        if let Some(m) = &h_mask {
            hp *= m;
        }
        h_prev.row_mut(t).assign(&hp);
        let z = &xw.row(t) + &p.w_hh.dot(&hp);
        let mut g = gates.row_mut(t);
        for k in 0..hd {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[hd + k]);
            let gg = z[2 * hd + k].tanh();
            let o = sigmoid(z[3 * hd + k]);
            g[k] = i;
            g[hd + k] = f;
            g[2 * hd + k] = gg;
            g[3 * hd + k] = o;
            cp[k] = f * cp[k] + i * gg;
            hp[k] = o * cp[k].tanh();
        }
        c.row_mut(t).assign(&cp);
        h.row_mut(t).assign(&hp);
    }
    LstmTape {
        x: x.to_owned(),
        h_prev,
        gates,
        c,
        h,
        h_mask,
    }
}

/// Back-propagates `dh` (gradient of the loss w.r.t. every output row),
/// accumulating parameter gradients into `grad` and returning the gradient
/// w.r.t. the inputs.
pub(crate) fn backward(p: &LstmParams, tape: &LstmTape, dh: ArrayView2<f64>, grad: &mut LstmParams) -> Array2<f64> {
    let n = tape.x.nrows();
    let hd = p.hidden();
    let mut dz = Array2::zeros((n, 4 * hd));
    let mut dh_next = Array1::<f64>::zeros(hd);
    let mut dc_next = Array1::<f64>::zeros(hd);
    for t in (0..n).rev() {
        let g = tape.gates.row(t);
        let c = tape.c.row(t);
        let mut dzt = dz.row_mut(t);
        for k in 0..hd {
            let (i, f, gg, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
            let c_prev = if t > 0 { tape.c[[t - 1, k]] } else { 0.0 };
            let tc = c[k].tanh();
            let dht = dh[[t, k]] + dh_next[k];
            let dc = dht * o * (1.0 - tc * tc) + dc_next[k];
            dzt[k] = dc * gg * i * (1.0 - i);
            dzt[hd + k] = dc * c_prev * f * (1.0 - f);
            dzt[2 * hd + k] = dc * i * (1.0 - gg * gg);
            dzt[3 * hd + k] = dht * tc * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        dh_next = p.w_hh.t().dot(&dzt);
        if let Some(m) = &tape.h_mask {
            dh_next *= m;
        }
    }
    grad.w_ih += &dz.t().dot(&tape.x);
    grad.w_hh += &dz.t().dot(&tape.h_prev);
    grad.b += &dz.sum_axis(Axis(0));
    dz.dot(&p.w_ih)
}

/// Reverses the row order.
pub(crate) fn reversed(x: ArrayView2<f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}
