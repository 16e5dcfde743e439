use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are kept per parameter, indexed like
/// the [`ParamStore`] they were created for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, _, t)| Tensor::zeros(t.shape()))
                .collect::<Vec<_>>()
        };
        AdamState {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Parameters without a gradient are left untouched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if self.m.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                format!("state has {} slots, store has {}", self.m.len(), params.len()),
            ));
        }
        for (id, g) in grads.params() {
            let p = params.get(id);
            if p.shape() != g.shape() || self.m[id.index()].shape() != p.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!(
                        "parameter '{}' {:?} vs gradient {:?}",
                        params.name(id),
                        p.shape(),
                        g.shape()
                    ),
                ));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (id, g) in grads.params() {
            let i = id.index();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params.get_mut(id).data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        if !params.all_finite() {
            return Err(Error::numerical("Adam update produced non-finite parameters"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    fn scalar_grad(store: &ParamStore, g: f64) -> Gradients {
        // d/dw (g * w) = g
        let id = store.id("w").unwrap();
        let mut t = Tape::new();
        let w = t.param(store, id);
        let y = t.scale(w, g).unwrap();
        t.backward(y).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(0.3)).unwrap();
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        for _ in 0..5 {
            let g = scalar_grad(&store, 0.0);
            adam.step(&mut store, &g).unwrap();
        }
        assert_eq!(store.get(store.id("w").unwrap()).item().unwrap(), 0.3);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // t=1: mhat = g, vhat = g^2, update = lr * g / (|g| + eps).
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(0.0)).unwrap();
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        let g = scalar_grad(&store, 1.0);
        adam.step(&mut store, &g).unwrap();
        let w = store.get(store.id("w").unwrap()).item().unwrap();
        let expected = -1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((w - expected).abs() < 1e-18, "{w} vs {expected}");
    }

    #[test]
    fn constant_gradient_moves_monotonically_against_sign() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(1.0)).unwrap();
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        let id = store.id("w").unwrap();
        let mut prev = 1.0;
        for _ in 0..2 {
            let g = scalar_grad(&store, 2.5);
            adam.step(&mut store, &g).unwrap();
            let w = store.get(id).item().unwrap();
            assert!(w < prev);
            prev = w;
        }
        assert_eq!(adam.steps(), 2);
    }
}
