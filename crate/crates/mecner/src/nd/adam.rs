//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use super::tensor::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment buffers, one pair per parameter tensor.
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let m = store
            .ids()
            .map(|id| vec![0.0; store.get(id).numel()])
            .collect::<Vec<_>>();
        let v = m.clone();
        AdamState {
            config,
            step: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over every parameter, consuming the gradients
    /// currently held in the store (they are not zeroed here).
    pub fn step(&mut self, store: &mut ParamStore) {
        assert_eq!(self.m.len(), store.len(), "optimizer/store length mismatch");
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for id in store.ids() {
            let tensor = store.get_mut(id);
            let n = tensor.numel();
            assert_eq!(
                self.m[id.index()].len(),
                n,
                "moment buffer shape mismatch for parameter {}",
                id.index()
            );
            let m = &mut self.m[id.index()];
            let v = &mut self.v[id.index()];
            let (values, grad) = tensor.values_and_grad();
            for j in 0..n {
                let g = grad[j];
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                values[j] -= c.lr * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
    }
}
