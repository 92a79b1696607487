use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::params::{Gradients, ParamId, ParamStore};
use crate::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Adam with bias correction and optional decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: HashMap<ParamId, (Mat, Mat)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, moments: HashMap::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter present in `grads`.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps, weight_decay } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for id in grads.ids() {
            let g = grads.get(id).expect("listed id");
            let (m, v) = self
                .moments
                .entry(id)
                .or_insert_with(|| (Array2::zeros(g.dim()), Array2::zeros(g.dim())));
            m.zip_mut_with(g, |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
            v.zip_mut_with(g, |v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
            let w = store.get_mut(id);
            if weight_decay > 0.0 {
                w.mapv_inplace(|x| x * (1.0 - lr * weight_decay));
            }
            ndarray::Zip::from(w).and(&*m).and(&*v).for_each(|w, &m, &v| {
                *w -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;
    use ndarray::array;

    #[test]
    fn minimizes_quadratic() {
        let mut store = ParamStore::new();
        let x = store.add("x", array![[3.0, -2.0]]).unwrap();
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() });
        for _ in 0..500 {
            let grads = {
                let mut g = Graph::new(&store);
                let v = g.param(x);
                let sq = g.mul(v, v);
                let out = g.sum_all(sq);
                g.backward(out)
            };
            opt.step(&mut store, &grads);
        }
        assert!(store.get(x).iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn untouched_params_stay_put() {
        let mut store = ParamStore::new();
        let a = store.add("a", array![[1.0]]).unwrap();
        let b = store.add("b", array![[1.0]]).unwrap();
        let mut grads = Gradients::new();
        grads.insert(a, array![[1.0]]);
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(&mut store, &grads);
        assert!(store.get(a)[[0, 0]] < 1.0);
        assert_eq!(store.get(b)[[0, 0]].to_bits(), 1.0f64.to_bits());
    }
}
