use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::GradientSet;
use crate::real::{cast, Real};
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState<F: Real = f32> {
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
    /// Updates applied so far.
    pub step: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &[&Tensor<F>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam step at update count `t` (starting at 1).
pub fn adam_update<F: Real>(
    params: &mut [&mut Tensor<F>],
    grads: &GradientSet<F>,
    state: &mut AdamState<F>,
    lr: f64,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidParameter("Adam step count starts at 1".into()));
    }
    if params.len() != grads.tensors.len() || params.len() != state.m.len() {
        return Err(Error::InvalidParameter(format!(
            "{} parameters, {} gradients, {} moment tensors",
            params.len(),
            grads.tensors.len(),
            state.m.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if p.shape() != grads.tensors[i].shape() || p.shape() != state.m[i].shape() {
            return Err(Error::ShapeMismatch {
                layer: i,
                expected: p.shape().to_vec(),
                actual: grads.tensors[i].shape().to_vec(),
            });
        }
    }
    let (b1, b2): (F, F) = (cast(BETA1), cast(BETA2));
    let c1: F = cast(1.0 - BETA1.powf(t as f64));
    let c2: F = cast(1.0 - BETA2.powf(t as f64));
    let (lr, eps): (F, F) = (cast(lr), cast(EPSILON));
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads.tensors[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (F::one() - b1) * g[j];
            v[j] = b2 * v[j] + (F::one() - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    state.step = t;
    Ok(())
}

/// Cosine annealing with warm restarts every `period` steps.
pub fn cosine_lr(base_lr: f64, step: usize, period: usize) -> Result<f64> {
    if period == 0 {
        return Err(Error::InvalidParameter("schedule period must be at least 1".into()));
    }
    let phase = (step % period) as f64 / period as f64;
    Ok(base_lr * (1.0 + (std::f64::consts::PI * phase).cos()) / 2.0)
}
