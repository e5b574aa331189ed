use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::{Scalar, Tensor};
use crate::error::{contract, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for every tensor of a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = || {
            params
                .entries()
                .iter()
                .map(|e| Tensor::zeros(e.tensor.rows(), e.tensor.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
            config,
        }
    }
}

/// One Adam update with bias-corrected moments; increments `state.t`.
pub fn adam_step<T: Scalar>(
    params: &mut ParamStore<T>,
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: T,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(contract!(
            "adam: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        ));
    }
    if lr < T::zero() {
        return Err(contract!("adam: negative learning rate"));
    }
    for (id, g) in params.ids().zip(grads) {
        let p = params.get(id);
        if p.shape() != g.shape() || state.m[id.0].shape() != p.shape() {
            return Err(contract!(
                "adam: shape mismatch for `{}`: param {:?}, grad {:?}",
                params.name(id),
                p.shape(),
                g.shape()
            ));
        }
    }

    state.t += 1;
    let cfg = state.config;
    let (b1, b2, eps) = (T::of(cfg.beta1), T::of(cfg.beta2), T::of(cfg.eps));
    let t = state.t as i32;
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let g = grads[id.0].data();
        let m = state.m[id.0].data_mut();
        let v = state.v[id.0].data_mut();
        let w = params.get_mut(id).data_mut();
        for i in 0..w.len() {
            m[i] = b1 * m[i] + (T::one() - b1) * g[i];
            v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(w: f64) -> ParamStore<f64> {
        let mut store = ParamStore::new(0);
        store.insert("w", Tensor::scalar(w)).unwrap();
        store
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut store = scalar_store(0.0);
        let mut state = AdamState::new(&store, AdamConfig::default());
        adam_step(&mut store, &[Tensor::scalar(1.0)], &mut state, 0.1).unwrap();
        let w = store.by_name("w").unwrap().item();
        assert!((w - (-0.1 / (1.0 + 1e-8))).abs() < 1e-10);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn two_step_hand_reference() {
        // Hand-executed recurrence: m2 = -0.01, v2 = 0.001999,
        // m̂2 = -0.01/0.19, v̂2 = 1.
        let mut store = scalar_store(0.0);
        let mut state = AdamState::new(&store, AdamConfig::default());
        adam_step(&mut store, &[Tensor::scalar(1.0)], &mut state, 0.1).unwrap();
        adam_step(&mut store, &[Tensor::scalar(-1.0)], &mut state, 0.1).unwrap();
        let w = store.by_name("w").unwrap().item();
        assert!((w - (-0.09473684115789476)).abs() < 1e-12);
        assert!((state.m[0].item() - (-0.01)).abs() < 1e-15);
        assert!((state.v[0].item() - 0.001999).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = scalar_store(1.5);
        let mut state = AdamState::new(&store, AdamConfig::default());
        adam_step(&mut store, &[Tensor::scalar(0.0)], &mut state, 0.1).unwrap();
        assert_eq!(store.by_name("w").unwrap().item(), 1.5);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut store = scalar_store(-2.0);
        let mut state = AdamState::new(&store, AdamConfig::default());
        for g in [3.0, -1.0, 7.0] {
            adam_step(&mut store, &[Tensor::scalar(g)], &mut state, 0.0).unwrap();
        }
        assert_eq!(store.by_name("w").unwrap().item(), -2.0);
        assert!(state.v[0].item() >= 0.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut store = scalar_store(0.0);
        let mut state = AdamState::new(&store, AdamConfig::default());
        let bad = Tensor::from_vec(1, 2, vec![1.0, 1.0]);
        assert!(adam_step(&mut store, &[bad], &mut state, 0.1).is_err());
        assert!(adam_step(&mut store, &[], &mut state, 0.1).is_err());
        assert_eq!(state.t, 0);
    }
}
