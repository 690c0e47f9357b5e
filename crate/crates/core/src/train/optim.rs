use ndarray::{ArrayD, ArrayViewD, ArrayViewMutD, Zip};
use serde::{Deserialize, Serialize};

use crate::encoder::Scalar;

/// Adam with decoupled weight decay, constant learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW<T> {
    config: AdamWConfig,
    lr: f64,
    step: i32,
    m: Vec<ArrayD<T>>,
    v: Vec<ArrayD<T>>,
}

impl<T: Scalar> AdamW<T> {
    /// Moments shaped like `params`.
    pub fn new(config: AdamWConfig, lr: f64, params: &[ArrayViewD<'_, T>]) -> Self {
        let zeros: Vec<ArrayD<T>> = params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect();
        Self {
            config,
            lr,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: Vec<ArrayViewMutD<'_, T>>, grads: Vec<ArrayViewD<'_, T>>) {
        assert_eq!(params.len(), self.m.len(), "parameter list changed between steps");
        self.step += 1;
        let c = self.config;
        let f = |v: f64| T::from_f64(v).unwrap();
        let (b1, b2, eps, lr) = (f(c.beta1), f(c.beta2), f(c.eps), f(self.lr));
        let decay = f(1.0 - self.lr * c.weight_decay);
        let bc1 = f(1.0 - c.beta1.powi(self.step));
        let bc2 = f(1.0 - c.beta2.powi(self.step));
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(p).and(&g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let update = (*m / bc1) / ((*v / bc2).sqrt() + eps);
                *p = *p * decay - lr * update;
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = array![1.0f64, -2.0, 0.5].into_dyn();
        let g = array![0.3f64, -4.0, 0.0].into_dyn();
        let mut opt = AdamW::new(AdamWConfig::default(), 0.01, &[p.view()]);
        opt.step(vec![p.view_mut()], vec![g.view()]);
        let expect = [1.0 - 0.01 * 0.3 / (0.3 + 1e-8), -2.0 + 0.01 * 4.0 / (4.0 + 1e-8), 0.5];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn minimizes_a_quadratic() {
        let target = Array1::from(vec![3.0f64, -1.0]);
        let mut p = Array1::<f64>::zeros(2).into_dyn();
        let mut opt = AdamW::new(AdamWConfig::default(), 0.05, &[p.view()]);
        for _ in 0..2000 {
            let g = (&p - &target.view().into_dyn()) * 2.0;
            opt.step(vec![p.view_mut()], vec![g.view()]);
        }
        assert!((p[0] - 3.0).abs() < 1e-3 && (p[1] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn decay_shrinks_without_gradient() {
        let mut p = array![2.0f64].into_dyn();
        let g = array![0.0f64].into_dyn();
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, 0.5, &[p.view()]);
        opt.step(vec![p.view_mut()], vec![g.view()]);
        assert!((p[0] - 2.0 * 0.95).abs() < 1e-12);
    }
}
