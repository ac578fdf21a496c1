use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-15;

/// First/second moment accumulators for a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![S::zero(); len],
            v: vec![S::zero(); len],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Rebuilds the accumulators after the parameter set changed. `sources[i]`
    /// names the old block (of `stride` values) that new block `i` inherits,
    /// or `None` for a fresh block with zero moments.
    pub fn remap(&mut self, sources: &[Option<usize>], stride: usize) {
        let mut m = Vec::with_capacity(sources.len() * stride);
        let mut v = Vec::with_capacity(sources.len() * stride);
        for src in sources {
            match src {
                Some(i) => {
                    m.extend_from_slice(&self.m[i * stride..(i + 1) * stride]);
                    v.extend_from_slice(&self.v[i * stride..(i + 1) * stride]);
                }
                None => {
                    m.extend(std::iter::repeat_n(S::zero(), stride));
                    v.extend(std::iter::repeat_n(S::zero(), stride));
                }
            }
        }
        self.m = m;
        self.v = v;
    }
}

/// One bias-corrected Adam update; `lr(i)` gives the rate of entry `i`.
pub fn adam_step<S: Scalar>(
    params: &mut [S],
    grads: &[S],
    state: &mut AdamState<S>,
    lr: impl Fn(usize) -> S,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::Shape(format!(
            "adam: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.len()
        )));
    }
    state.step += 1;
    let (b1, b2) = (S::lit(ADAM_BETA1), S::lit(ADAM_BETA2));
    let eps = S::lit(ADAM_EPS);
    let t = state.step as i32;
    let c1 = S::one() - b1.powi(t);
    let c2 = S::one() - b2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (S::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (S::one() - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr(i) * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
