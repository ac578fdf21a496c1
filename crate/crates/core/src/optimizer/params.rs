//! Flat per-primitive parameter layout used by the optimizer:
//! `[mean(3) | rotation(4) | log_scale(3) | opacity_logit | sh(d_c)]`.

use super::config::LearningRates;
use crate::error::{Error, Result};
use crate::geometry::{sh_coeff_count, Quaternion};
use crate::rasterizer::SplatGradients;
use crate::scalar::Scalar;
use crate::scene::GaussianPrimitive;

const MEAN: usize = 0;
const ROT: usize = 3;
const SCALE: usize = 7;
const OPACITY: usize = 10;
const SH: usize = 11;

pub fn param_stride(sh_degree: usize) -> usize {
    SH + sh_coeff_count(sh_degree)
}

pub fn flatten_primitives<S: Scalar>(prims: &[GaussianPrimitive<S>], sh_degree: usize) -> Vec<S> {
    let stride = param_stride(sh_degree);
    let mut out = Vec::with_capacity(prims.len() * stride);
    for p in prims {
        out.extend_from_slice(&p.mean);
        out.extend_from_slice(&p.rotation.to_array());
        out.extend_from_slice(&p.log_scale);
        out.push(p.opacity_logit);
        out.extend_from_slice(&p.sh);
    }
    out
}

/// Writes `flat` back into `prims` (modality tags untouched).
pub fn unflatten_primitives<S: Scalar>(flat: &[S], prims: &mut [GaussianPrimitive<S>], sh_degree: usize) -> Result<()> {
    let stride = param_stride(sh_degree);
    if flat.len() != prims.len() * stride {
        return Err(Error::Shape(format!(
            "{} flat values for {} primitives of stride {stride}",
            flat.len(),
            prims.len()
        )));
    }
    for (p, b) in prims.iter_mut().zip(flat.chunks_exact(stride)) {
        p.mean.copy_from_slice(&b[MEAN..ROT]);
        p.rotation = Quaternion::from_array([b[ROT], b[ROT + 1], b[ROT + 2], b[ROT + 3]]);
        p.log_scale.copy_from_slice(&b[SCALE..OPACITY]);
        p.opacity_logit = b[OPACITY];
        p.sh.copy_from_slice(&b[SH..]);
    }
    Ok(())
}

/// Flat gradient in the same layout; geometry slots are zero when the
/// backward pass did not produce geometry gradients.
pub fn flatten_gradients<S: Scalar>(grads: &SplatGradients<S>, n: usize, sh_degree: usize) -> Vec<S> {
    let d_c = sh_coeff_count(sh_degree);
    let stride = param_stride(sh_degree);
    let mut out = vec![S::zero(); n * stride];
    for (i, b) in out.chunks_exact_mut(stride).enumerate() {
        if let Some(g) = &grads.geometry {
            b[MEAN..ROT].copy_from_slice(&g.d_mean[i]);
            b[ROT..SCALE].copy_from_slice(&g.d_rotation[i]);
            b[SCALE..OPACITY].copy_from_slice(&g.d_log_scale[i]);
        }
        b[OPACITY] = grads.d_opacity_logit[i];
        b[SH..].copy_from_slice(&grads.d_sh[i * d_c..(i + 1) * d_c]);
    }
    out
}

/// Learning rate of every slot in a primitive block for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct LrGroups<S> {
    block: Vec<S>,
}

impl<S: Scalar> LrGroups<S> {
    /// `position` is the already decayed and extent-scaled mean rate.
    pub fn new(lr: &LearningRates, position: f64, sh_degree: usize) -> Self {
        let stride = param_stride(sh_degree);
        let mut block = vec![S::zero(); stride];
        for (k, slot) in block.iter_mut().enumerate() {
            let r = match k {
                MEAN..ROT => position,
                ROT..SCALE => lr.rotation,
                SCALE..OPACITY => lr.scale,
                OPACITY => lr.opacity,
                k if k < SH + 3 => lr.sh_dc,
                _ => lr.sh_dc / lr.sh_rest_divisor,
            };
            *slot = S::lit(r);
        }
        Self { block }
    }

    /// Same block with geometry slots zeroed (appearance-only updates).
    pub fn appearance_only(mut self) -> Self {
        self.block[MEAN..OPACITY].iter_mut().for_each(|v| *v = S::zero());
        self
    }

    pub fn rate(&self, i: usize) -> S {
        self.block[i % self.block.len()]
    }
}
