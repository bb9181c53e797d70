use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Per-parameter Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step_count: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            step_count: 0,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            lr,
        }
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step<T: Scalar>(
    param: &mut Tensor<T>,
    grad: &[T],
    state: &mut AdamState<T>,
    name: &str,
) -> Result<()> {
    if grad.len() != param.len() {
        return Err(Error::dim(
            format!("gradient of {name}"),
            param.len(),
            grad.len(),
        ));
    }
    if state.m.len() != param.len() || state.v.len() != param.len() {
        return Err(Error::dim(
            format!("adam moments of {name}"),
            param.len(),
            state.m.len(),
        ));
    }
    if !(state.lr > 0.0) {
        return Err(Error::Config(format!(
            "learning rate must be positive, got {}",
            state.lr
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Training(format!(
            "non-finite gradient in {name} at element {i}"
        )));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (T::lit(state.beta1), T::lit(state.beta2));
    let (c1, c2) = (T::one() - b1, T::one() - b2);
    let bc1 = T::lit(1.0 - state.beta1.powi(t));
    let bc2 = T::lit(1.0 - state.beta2.powi(t));
    let lr = T::lit(state.lr);
    let eps = T::lit(state.eps);
    for (((p, &g), m), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + c1 * g;
        *v = b2 * *v + c2 * g * g;
        let mhat = *m / bc1;
        let vhat = *v / bc2;
        *p -= lr * mhat / (vhat.sqrt() + eps);
    }
    Ok(())
}
