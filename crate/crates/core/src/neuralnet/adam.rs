use super::{Gradients, MlpModel};
use crate::error::{invalid, Result};

/// First/second moment buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(model: &mut MlpModel, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let shapes: Vec<usize> = model.parameters_mut().iter().map(|p| p.len()).collect();
        Self {
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState, learning_rate: f64) -> Result<()> {
    let g = grads.slices();
    let mut params = model.parameters_mut();
    if g.len() != params.len()
        || state.m.len() != params.len()
        || params.iter().zip(&g).zip(&state.m).any(|((p, g), m)| p.len() != g.len() || p.len() != m.len())
    {
        return Err(invalid("gradient/optimizer state shapes do not match the model"));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(&g).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
