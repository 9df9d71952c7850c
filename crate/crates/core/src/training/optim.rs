use std::f64::consts::PI;

use super::TrainError;
use crate::model::ParamStore;
use crate::numerics::{Gradients, ParamId, Tensor};

/// AdamW hyperparameters other than the learning rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        Self {
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter, in parameter-store order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam step with decoupled weight decay.
///
/// For every parameter: `w ← w·(1 − lr·wd)` if the parameter decays, then
/// `w ← w − lr·m̂/(√v̂ + eps)`. Parameters without an entry in `grads` are
/// treated as having a zero gradient.
pub fn adamw_step(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut OptimizerState,
    lr: f64,
    opt: &AdamW,
) -> Result<(), TrainError> {
    if state.m.len() != params.len() {
        return Err(TrainError::Optimizer(format!(
            "state holds {} tensors for {} parameters",
            state.m.len(),
            params.len()
        )));
    }
    for (id, g) in grads.iter() {
        if id.0 >= params.len() {
            return Err(TrainError::Optimizer(format!("gradient for unknown parameter {}", id.0)));
        }
        let p = params.get(id);
        if g.shape() != p.shape() {
            return Err(TrainError::Optimizer(format!(
                "gradient of `{}` has shape {:?}, parameter {:?}",
                params.name(id),
                g.shape(),
                p.shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - opt.beta1.powi(t);
    let c2 = 1.0 - opt.beta2.powi(t);
    let ids: Vec<ParamId> = params.ids().collect();
    for id in ids {
        let decay = if params.decays(id) { 1.0 - lr * opt.weight_decay } else { 1.0 };
        let g = grads.get(id).ok();
        let m = state.m[id.0].data_mut();
        let v = state.v[id.0].data_mut();
        let w = params.values_mut(id);
        if m.len() != w.len() {
            return Err(TrainError::Optimizer(format!("moment shape differs for parameter {}", id.0)));
        }
        for i in 0..w.len() {
            let gi = g.map_or(0.0, |g| g.data()[i]);
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * gi;
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * gi * gi;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            w[i] = w[i] * decay - lr * mhat / (vhat.sqrt() + opt.eps);
        }
    }
    Ok(())
}

/// `lr0 · ½(1 + cos(π·step/total))` for `0 ≤ step ≤ total`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> Result<f64, TrainError> {
    if total_steps == 0 || step > total_steps {
        return Err(TrainError::Schedule { step, total_steps });
    }
    Ok(lr0 * 0.5 * (1.0 + (PI * step as f64 / total_steps as f64).cos()))
}
