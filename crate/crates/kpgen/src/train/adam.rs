use crate::error::{KpError, Result};
use crate::model::{GradientSet, ModelDims, ModelParams};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(dims: ModelDims) -> Self {
        AdamState { m: ModelParams::zeros(dims), v: ModelParams::zeros(dims), step: 0 }
    }
}

/// Scale gradients so their global L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut GradientSet, max_norm: f64) -> f64 {
    let norm_sq: f64 = grads
        .tensors()
        .iter()
        .map(|(_, t)| t.as_slice().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = norm_sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for (_, mut t) in grads.tensors_mut() {
            for v in t.as_slice_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// One bias-corrected Adam update. Tensors with an all-zero gradient keep
/// their parameters unchanged (their moments stay zero as well).
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradientSet,
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    let names: Vec<&'static str> = params.tensors().iter().map(|(n, _)| *n).collect();
    let mut p_t = params.tensors_mut();
    let g_t = grads.tensors();
    let mut m_t = state.m.tensors_mut();
    let mut v_t = state.v.tensors_mut();
    for i in 0..names.len() {
        let p = p_t[i].1.as_slice_mut();
        let g = g_t[i].1.as_slice();
        let m = m_t[i].1.as_slice_mut();
        let v = v_t[i].1.as_slice_mut();
        for j in 0..p.len() {
            m[j] = BETA1 * m[j] + (1.0 - BETA1) * g[j];
            v[j] = BETA2 * v[j] + (1.0 - BETA2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= learning_rate * m_hat / (v_hat.sqrt() + EPS);
            if !p[j].is_finite() {
                return Err(KpError::NonFinite(names[i].to_string()));
            }
        }
    }
    Ok(())
}
