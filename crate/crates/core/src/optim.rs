//! Adam with bias correction, a step-halving learning-rate schedule, and
//! global-norm gradient clipping.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{shape, Error, Result};
use crate::fmath;
use crate::linalg::Matrix;
use crate::model::{NetworkParams, TENSOR_NAMES};

/// Optimization settings for one training run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub lr0: f64,
    pub epochs: usize,
    /// The learning rate halves every `lr_halving_period` epochs.
    pub lr_halving_period: usize,
    /// Weight of the frequency loss in the objective.
    pub alpha: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients whose global L2 norm exceeds this are rescaled to it.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.005,
            epochs: 100,
            lr_halving_period: 8,
            alpha: 1e-4,
            batch_size: 16,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("{m}: {self:?}")));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return fail("lr0 must be positive");
        }
        if self.epochs == 0 || self.lr_halving_period == 0 || self.batch_size == 0 {
            return fail("epochs, lr_halving_period and batch_size must be at least 1");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail("alpha must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return fail("Adam betas must lie in [0, 1) and eps must be positive");
        }
        if !(self.clip_norm > 0.0) {
            return fail("clip_norm must be positive");
        }
        Ok(())
    }
}

/// `lr0 · 0.5^⌊epoch / lr_halving_period⌋`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let halvings = (epoch / cfg.lr_halving_period).min(i32::MAX as usize) as i32;
    cfg.lr0 * fmath::powi(0.5, halvings)
}

/// First and second moment estimates, one matrix per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let m: Vec<Matrix> = params.into_iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self {
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn for_network(params: &NetworkParams) -> Self {
        Self::new(params.tensors())
    }
}

/// One Adam update applied in place to `params`.
///
/// All gradients are checked before anything is modified; a non-finite
/// entry fails with the name of its tensor and leaves `params` and `state`
/// untouched.
pub fn adam_update(
    params: &mut [&mut Matrix],
    grads: &[&Matrix],
    names: &[&str],
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != names.len() {
        return Err(shape("Adam: parameter, gradient and state counts differ"));
    }
    for ((p, g), name) in params.iter().zip(grads).zip(names) {
        if p.shape() != g.shape() {
            return Err(shape(format!("Adam: gradient for {name} has shape {:?}, expected {:?}", g.shape(), p.shape())));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    state.step += 1;
    let t = state.step.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - fmath::powi(cfg.beta1, t);
    let c2 = 1.0 - fmath::powi(cfg.beta2, t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (k, (theta, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            *theta -= lr * m_hat / (fmath::sqrt(v_hat) + cfg.eps);
        }
    }
    Ok(())
}

/// [`adam_update`] over every tensor of the network.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &NetworkParams,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut ps = params.tensors_mut();
    adam_update(&mut ps, &grads.tensors(), &TENSOR_NAMES, state, lr, cfg)
}

/// Global L2 norm over all tensors.
pub fn global_norm<'a>(tensors: impl IntoIterator<Item = &'a Matrix>) -> f64 {
    fmath::sqrt(
        tensors
            .into_iter()
            .flat_map(|m| m.data())
            .map(|v| v * v)
            .sum::<f64>(),
    )
}

/// Rescales `grads` so their global norm is at most `max_norm`. Returns the
/// norm before clipping when clipping happened.
pub fn clip_global_norm(grads: &mut NetworkParams, max_norm: f64) -> Option<f64> {
    let norm = global_norm(grads.tensors());
    if norm > max_norm {
        let s = max_norm / norm;
        for t in grads.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= s);
        }
        Some(norm)
    } else {
        None
    }
}
