use crate::error::{Result, TensorError};
use crate::param::{Bound, ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Gradients;

#[derive(Debug, Clone, Copy, PartialEq)]
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

/// Adam with bias correction. The learning rate is passed per step so that
/// schedules live with the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    steps: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = || store.params().iter().map(|p| vec![T::zero(); p.data.len()]).collect();
        Self {
            config,
            m: zeros(),
            v: zeros(),
            steps: 0,
        }
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.m, &self.v)
    }

    /// Rebuild from saved moments, e.g. when resuming a run.
    pub fn from_state(config: AdamConfig, m: Vec<Vec<T>>, v: Vec<Vec<T>>, steps: u64) -> Self {
        Self { config, m, v, steps }
    }

    /// One update of every parameter that received a gradient in `grads`.
    pub fn step(&mut self, store: &mut ParamStore<T>, bound: &Bound<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
        if self.m.len() != store.len() || bound.leaves().len() != store.len() {
            return Err(TensorError::Invalid {
                op: "Adam::step",
                msg: "optimizer state does not match parameter store".into(),
            });
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let step_size = T::from_f64_lossy(lr / bc1);
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let inv_sqrt_bc2 = T::from_f64_lossy(1.0 / bc2.sqrt());
        let eps = T::from_f64_lossy(c.eps);
        for i in 0..store.len() {
            let id = ParamId(i);
            let Some(g) = grads.get(bound.get(id)) else {
                continue;
            };
            let data = store.data_mut(id);
            if g.len() != data.len() {
                return Err(TensorError::Invalid {
                    op: "Adam::step",
                    msg: format!("gradient length {} for parameter of {}", g.len(), data.len()),
                });
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((p, &g), m), v) in data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                *p = *p - step_size * *m / ((*v).sqrt() * inv_sqrt_bc2 + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut store = ParamStore::<f64>::new();
        let id = store.push("x", &[2], vec![3.0, -2.0]);
        let mut opt = Adam::new(AdamConfig::default(), &store);
        for _ in 0..2000 {
            let b = store.bind(true);
            let target = Tensor::from_vec(vec![1.0, 0.5], &[2]).unwrap();
            let loss = b.get(id).sub(&target).unwrap().sqr().sum_all();
            let g = loss.backward();
            opt.step(&mut store, &b, &g, 0.01).unwrap();
        }
        let x = &store.get(id).data;
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] - 0.5).abs() < 1e-3, "{x:?}");
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first update is lr * sign(g).
        let mut store = ParamStore::<f64>::new();
        let id = store.push("x", &[1], vec![0.0]);
        let mut opt = Adam::new(AdamConfig::default(), &store);
        let b = store.bind(true);
        let g = b.get(id).mul_scalar(5.0).sum_all().backward();
        opt.step(&mut store, &b, &g, 0.1).unwrap();
        assert!((store.get(id).data[0] + 0.1).abs() < 1e-9);
    }
}
