//! Adam with bias correction and decoupled weight decay.

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::tensor::{ParamStore, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-5 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return invalid(format!("learning rate must be positive, got {}", self.lr));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return invalid(format!("betas ({}, {}) outside [0, 1)", self.beta1, self.beta2));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return invalid("eps must be positive and weight decay non-negative");
        }
        Ok(())
    }
}

/// First and second moments per parameter, shaped like the parameters.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self { m: zeros(), v: zeros(), step: 0 }
    }
}

/// One update from the gradients accumulated in `params`:
/// `θ ← θ - lr·m̂/(√v̂ + ε) - lr·wd·θ`.
pub fn adam_step<T: Real>(params: &mut ParamStore<T>, state: &mut AdamState<T>, cfg: &AdamConfig) {
    assert_eq!(state.m.len(), params.len(), "optimizer state belongs to another model");
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = T::of(1.0 / (1.0 - b1.powi(t)));
    let c2 = T::of(1.0 / (1.0 - b2.powi(t)));
    let (lr, eps, decay) = (T::of(cfg.lr), T::of(cfg.eps), T::of(cfg.lr * cfg.weight_decay));
    let (b1, b2) = (T::of(b1), T::of(b2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let theta = Arc::make_mut(&mut p.value).data_mut();
        let g = p.grad.data();
        for (((th, &g), m), v) in theta.iter_mut().zip(g).zip(m.data_mut()).zip(v.data_mut()) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let step = lr * (*m * c1) / ((*v * c2).sqrt() + eps);
            *th = *th - step - decay * *th;
        }
    }
}
