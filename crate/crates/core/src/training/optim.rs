use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::ModelParams;

/// Adam hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// The learning rate is multiplied by `decay` every `decay_steps` steps.
    pub decay: f64,
    pub decay_steps: u64,
    /// Global gradient norm cap; 0 disables clipping.
    pub clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.9,
            eps: 1e-12,
            decay: 0.75,
            decay_steps: 5000,
            clip: 5.0,
        }
    }
}

/// Moment estimates and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ModelParams,
    pub v: ModelParams,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

fn same_shapes(a: &ModelParams, b: &ModelParams) -> Result<()> {
    let (ta, tb) = (a.tensors(), b.tensors());
    if ta.len() != tb.len() {
        return Err(Error::Shape(format!("{} tensors against {}", ta.len(), tb.len())));
    }
    for ((na, _, sa), (_, _, sb)) in ta.iter().zip(&tb) {
        if sa != sb {
            return Err(Error::Shape(format!("{na}: {sa:?} against {sb:?}")));
        }
    }
    Ok(())
}

pub fn global_norm(grads: &ModelParams) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|(_, t, _)| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// One bias-corrected Adam update; `grads` are clipped to the configured
/// global norm first. Returns the gradient norm before clipping.
pub fn optimizer_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    hyper: &AdamConfig,
) -> Result<f64> {
    same_shapes(params, grads)?;
    same_shapes(params, &state.m)?;
    same_shapes(params, &state.v)?;
    let norm = global_norm(grads);
    let scale = if hyper.clip > 0.0 && norm > hyper.clip {
        hyper.clip / norm
    } else {
        1.0
    };
    let lr = hyper.lr * hyper.decay.powf((state.step / hyper.decay_steps.max(1)) as f64);
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    let gs = grads.tensors();
    for (((_, p), (_, m)), ((_, v), (_, g, _))) in params
        .tensors_mut()
        .into_iter()
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut().into_iter().zip(gs))
    {
        for k in 0..p.len() {
            let gk = g[k] * scale;
            m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * gk;
            v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * gk * gk;
            p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + hyper.eps);
        }
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::ModelConfig;

    fn tiny() -> ModelParams {
        let mut p = ModelParams::zeros(&ModelConfig::tiny(), 4, 3, 2);
        p.fill(0.5);
        p
    }

    #[test]
    fn zero_gradients_leave_params() {
        let mut p = tiny();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let zero = p.zeros_like();
        optimizer_step(&mut p, &zero, &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn hand_traced_updates() {
        let mut p = tiny();
        let mut g = p.zeros_like();
        g.word_emb[[0, 0]] = 0.3;
        let hyper = AdamConfig {
            clip: 0.0,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(&p);
        optimizer_step(&mut p, &g, &mut st, &hyper).unwrap();
        // m = 0.03, v = 0.009; bias-corrected 0.3 and 0.09, so the step is lr
        let want = 0.5 - 2e-3 * 0.3 / (0.09f64.sqrt() + 1e-12);
        assert!((p.word_emb[[0, 0]] - want).abs() < 1e-15);
        assert_eq!(p.word_emb[[0, 1]], 0.5);
        optimizer_step(&mut p, &g, &mut st, &hyper).unwrap();
        // constant gradients keep the corrected ratio at 1
        assert!((p.word_emb[[0, 0]] - (0.5 - 4e-3)).abs() < 1e-12);
    }

    #[test]
    fn clipping_and_decay() {
        let mut p = tiny();
        let mut g = p.zeros_like();
        g.fill(1.0);
        let n = global_norm(&g);
        assert!(n > 5.0);
        let hyper = AdamConfig::default();
        let mut st = AdamState::new(&p);
        assert_eq!(optimizer_step(&mut p, &g, &mut st, &hyper).unwrap(), n);
        // clipping rescales all entries equally, so Adam's first step is still lr
        assert!((p.word_emb[[0, 0]] - (0.5 - 2e-3)).abs() < 1e-12);

        let mut q = tiny();
        let mut st = AdamState::new(&q);
        st.step = 5000;
        st.m.fill(0.0);
        optimizer_step(&mut q, &g, &mut st, &hyper).unwrap();
        assert!((0.5 - q.word_emb[[0, 0]]) < 2e-3 * 0.75 + 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = tiny();
        let other = ModelParams::zeros(&ModelConfig::tiny(), 5, 3, 2);
        let mut st = AdamState::new(&p);
        assert!(optimizer_step(&mut p, &other, &mut st, &AdamConfig::default()).is_err());
    }
}
