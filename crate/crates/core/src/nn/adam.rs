use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moments of parameters whose gradient stays zero (dead rectifier units)
/// decay geometrically into the subnormal range, where arithmetic is two
/// orders of magnitude slower. They are flushed to zero instead; the
/// parameter change this drops is below 1e-300.
#[inline]
fn flush(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

/// Adam with bias-corrected moments; state is keyed by parameter order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || store.ids().map(|id| vec![0.0; store.grad(id).len()]).collect();
        Self { config, m: zeros(), v: zeros(), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients accumulated in `store`.
    ///
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for id in store.ids() {
            if store.grad(id).iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of parameter {}", store.name(id))));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for id in store.ids().collect::<Vec<_>>() {
            let g = store.grad(id).to_vec();
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let w = &mut store.value_mut(id).data;
            for k in 0..g.len() {
                m[k] = flush(beta1 * m[k] + (1.0 - beta1) * g[k]);
                v[k] = flush(beta2 * v[k] + (1.0 - beta2) * g[k] * g[k]);
                w[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn store_with(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new(0);
        s.add("w", Tensor::new(1, values.len(), values));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = store_with(vec![0.5, -2.0]);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        adam.step(&mut s).unwrap();
        assert_eq!(s.flat(), vec![0.5, -2.0]);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        // m̂ = g, v̂ = g² after one step, so the update is lr·g/(|g|+ε)
        let mut s = store_with(vec![1.0, 1.0, 1.0]);
        let g = [3.0, -0.2, 1e-3];
        s.grad_mut(crate::nn::ParamId(0)).copy_from_slice(&g);
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(cfg, &s);
        adam.step(&mut s).unwrap();
        for (w, g) in s.flat().iter().zip(g) {
            let expect = 1.0 - cfg.lr * g / (g.abs() + cfg.eps);
            assert!((w - expect).abs() < 1e-15, "{w} vs {expect}");
        }
    }

    #[test]
    fn quadratic_bowl_descends() {
        let mut s = store_with(vec![1.0; 4]);
        let mut adam = Adam::new(AdamConfig { lr: 1e-2, ..Default::default() }, &s);
        let loss = |s: &ParamStore| s.flat().iter().map(|w| 0.5 * w * w).sum::<f64>();
        let mut prev = loss(&s);
        for _ in 0..100 {
            s.zero_grads();
            let w = s.flat();
            s.grad_mut(crate::nn::ParamId(0)).copy_from_slice(&w);
            adam.step(&mut s).unwrap();
            let now = loss(&s);
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut s = store_with(vec![1.0]);
        s.grad_mut(crate::nn::ParamId(0))[0] = f64::NAN;
        let mut adam = Adam::new(AdamConfig::default(), &s);
        match adam.step(&mut s) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains('w')),
            other => panic!("{other:?}"),
        }
        assert_eq!(s.flat(), vec![1.0]);
    }

    #[test]
    fn vanishing_moments_stay_normal() {
        let mut s = store_with(vec![1.0, 1.0]);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        s.grad_mut(crate::nn::ParamId(0)).copy_from_slice(&[1.0, 1.0]);
        adam.step(&mut s).unwrap();
        s.zero_grads();
        // 0.9^7000 is far below the smallest normal double
        for _ in 0..7000 {
            adam.step(&mut s).unwrap();
        }
        assert!(adam.m[0].iter().all(|m| *m == 0.0 || m.is_normal()));
        assert!(adam.v[0].iter().all(|v| *v == 0.0 || v.is_normal()));
        assert!(s.value(crate::nn::ParamId(0)).data.iter().all(|w| w.is_finite()));
    }
}
