use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ModelParams, ParamTensors};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: ModelParams,
    pub v: ModelParams,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update. `delta_t` is clamped to be non-negative
/// afterwards.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
) -> Result<()> {
    for (name, g) in grads.tensors() {
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}[{i}]")));
        }
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.step += 1;
    let bc1 = 1.0 - beta1.powf(state.step as f64);
    let bc2 = 1.0 - beta2.powf(state.step as f64);

    let grads = grads.tensors();
    let moments = state.m.tensors_mut().into_iter().zip(state.v.tensors_mut());
    for (((name, p), (_, g)), ((_, m), (_, v))) in
        params.tensors_mut().into_iter().zip(grads).zip(moments)
    {
        debug_assert_eq!(p.len(), g.len(), "{name}");
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    params.delta_t = params.delta_t.max(0.0);
    if !params.all_finite() {
        return Err(Error::NonFinite("parameters after Adam step".into()));
    }
    Ok(())
}
