//! Adam with per-epoch exponential learning-rate decay.


use super::backward::ParamGrads;
use crate::error::{Error, Result};
use crate::model::ModelParams;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OptimizerState {
    m: ModelParams,
    v: ModelParams,
    step: u64,
    lr0: f64,
    decay: f64,
    epoch: u32,
}


impl OptimizerState {
    pub fn new(params: &ModelParams, learning_rate: f64, lr_decay: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(lr_decay > 0.0 && lr_decay <= 1.0) {
            return Err(Error::invalid("learning-rate decay must lie in (0, 1]"));
        }
        Ok(Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            lr0: learning_rate,
            decay: lr_decay,
            epoch: 0,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    /// `lr0 · decay^epoch`.
    pub fn learning_rate(&self) -> f64 {
        self.lr0 * self.decay.powi(self.epoch as i32)
    }

    pub fn end_epoch(&mut self) {
        self.epoch += 1;
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut ModelParams, grads: &ParamGrads, state: &mut OptimizerState) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) {
        return Err(Error::invalid("gradient shapes do not match parameters"));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    state.step += 1;
    let t = state.step as i32;
    let lr = state.learning_rate();
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut())
    {
        for (((p, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}
