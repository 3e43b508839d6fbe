//! Finite-difference check of [`Model::backward`] over every tensor.

use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Encoded, Mode, Model};
use crate::error::Result;
use crate::oracle::finite_diff;

/// Agreement of one tensor's analytic gradient with central differences.
#[derive(Clone, Debug)]
pub struct GroupCheck {
    pub name: String,
    pub size: usize,
    /// Largest `|analytic - numeric|`.
    pub max_abs_err: f64,
    /// Entries outside the tolerance.
    pub failures: usize,
}

impl GroupCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Checks `d/dθ [Σ a ∘ spans + Σ b ∘ labels]` for fixed random weights `a`
/// on width >= 2 spans and `b` on all spans. With `dropout_seed` the pass
/// runs in training mode and every evaluation replays the same masks. An
/// entry passes when the two estimates differ by at most
/// `max(abs_tol, rel_tol * |numeric|)`.
pub fn check_gradients(
    model: &Model,
    enc: &Encoded,
    dropout_seed: Option<u64>,
    step: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Vec<GroupCheck>> {
    use rand::Rng;
    let n = enc.len();
    let nl = model.labels.len();
    let mut wrng = ChaCha8Rng::seed_from_u64(0x5eed);
    // only cells a loss can touch: width >= 2 spans, and all spans for labels
    let a = Array2::from_shape_fn((n, n), |(i, j)| if j > i { wrng.gen_range(-1.0..1.0) } else { 0.0 });
    let b = Array3::from_shape_fn(
        (n, n, nl),
        |(i, j, _)| if j >= i { wrng.gen_range(-1.0..1.0) } else { 0.0 },
    );

    let run = |m: &Model, record: bool| {
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed.unwrap_or(0));
        let mut mode = match dropout_seed {
            Some(_) => Mode::Train(&mut rng),
            None => Mode::Eval,
        };
        m.forward(enc, &mut mode, record)
    };
    let scored = run(model, true)?;
    let mut grad = model.params.zeros_like();
    model.backward(&scored, a.view(), b.view(), &mut grad)?;

    let mut out = Vec::new();
    let names: Vec<String> = model.params.tensors().into_iter().map(|(n, _, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grad.tensors().into_iter().map(|(_, t, _)| t.to_vec()).collect();
    for (k, name) in names.into_iter().enumerate() {
        let point = model.params.tensors()[k].1.to_vec();
        let mut probe = model.clone();
        let numeric = finite_diff(
            |v| {
                probe.params.tensors_mut()[k].1.copy_from_slice(v);
                let s = run(&probe, false).expect("forward succeeded once").scores;
                (&s.spans * &a).sum() + (&s.labels * &b).sum()
            },
            &point,
            step,
        )?;
        let mut max_abs_err: f64 = 0.0;
        let mut failures = 0;
        for (x, y) in analytic[k].iter().zip(&numeric) {
            let err = (x - y).abs();
            max_abs_err = max_abs_err.max(err);
            if err > abs_tol.max(rel_tol * y.abs()) {
                failures += 1;
            }
        }
        out.push(GroupCheck {
            name,
            size: point.len(),
            max_abs_err,
            failures,
        });
    }
    Ok(out)
}
