//! Training objectives. Each returns a scalar value together with the
//! gradient of that value with respect to the rendered image.

mod sobel;
mod ssim;

pub use sobel::{sobel, sobel_adjoint};
pub use ssim::{ssim, ssim_value, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::scalar::Scalar;

/// Default weight of the L1 intensity term.
pub const DEFAULT_LAMBDA1: f64 = 1.0;
/// Default weight of the two SSIM terms.
pub const DEFAULT_LAMBDA2: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue<S> {
    pub value: S,
    pub d_image: ImageBuffer<S>,
}

impl<S: Scalar> LossValue<S> {
    fn scaled(mut self, k: S) -> Self {
        self.value *= k;
        self.d_image.data.iter_mut().for_each(|v| *v *= k);
        self
    }

    fn add(mut self, other: Self) -> Self {
        self.value += other.value;
        for (a, b) in self.d_image.data.iter_mut().zip(other.d_image.data) {
            *a += b;
        }
        self
    }
}

/// Mean absolute difference; gradient with respect to `a`, zero at ties.
pub fn l1_loss<S: Scalar>(a: &ImageBuffer<S>, b: &ImageBuffer<S>) -> Result<LossValue<S>> {
    a.ensure_same_dims(b)?;
    let n = S::from_usize(a.len().max(1)).unwrap();
    let inv = S::one() / n;
    let mut total = S::zero();
    let mut d = ImageBuffer::new(a.width, a.height, a.channels);
    for ((g, &x), &y) in d.data.iter_mut().zip(&a.data).zip(&b.data) {
        let diff = x - y;
        total += diff.abs();
        *g = if diff > S::zero() {
            inv
        } else if diff < S::zero() {
            -inv
        } else {
            S::zero()
        };
    }
    Ok(LossValue { value: total / n, d_image: d })
}

/// `1 − SSIM(a, b)` with gradient with respect to `a`.
pub fn dssim_loss<S: Scalar>(a: &ImageBuffer<S>, b: &ImageBuffer<S>) -> Result<LossValue<S>> {
    let (v, g) = ssim(a, b)?;
    Ok(LossValue {
        value: S::one() - v,
        d_image: g.map(|x| -x),
    })
}

/// `‖target − render‖₁ + (1 − SSIM(target, render))`, differentiated with
/// respect to `render`.
pub fn modality_loss<S: Scalar>(target: &ImageBuffer<S>, render: &ImageBuffer<S>) -> Result<LossValue<S>> {
    Ok(l1_loss(render, target)?.add(dssim_loss(render, target)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Loss<S> {
    pub value: S,
    pub visible: S,
    pub infrared: S,
    pub d_visible_render: ImageBuffer<S>,
    pub d_infrared_render: ImageBuffer<S>,
}

/// `γ·L_visible + (1 − γ)·L_infrared`.
pub fn stage1_loss<S: Scalar>(
    visible: &ImageBuffer<S>,
    visible_render: &ImageBuffer<S>,
    infrared: &ImageBuffer<S>,
    infrared_render: &ImageBuffer<S>,
    gamma: S,
) -> Result<Stage1Loss<S>> {
    if !(gamma >= S::zero() && gamma <= S::one()) {
        return Err(Error::InvalidParameter(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let lv = modality_loss(visible, visible_render)?;
    let lt = modality_loss(infrared, infrared_render)?;
    let (rv, rt) = (lv.value, lt.value);
    let lv = lv.scaled(gamma);
    let lt = lt.scaled(S::one() - gamma);
    Ok(Stage1Loss {
        value: lv.value + lt.value,
        visible: rv,
        infrared: rt,
        d_visible_render: lv.d_image,
        d_infrared_render: lt.d_image,
    })
}

/// Stage-2 supervision derived from one visible/infrared pair.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionTargets<S> {
    pub visible: ImageBuffer<S>,
    /// Infrared replicated to three channels.
    pub infrared: ImageBuffer<S>,
    pub max_vt: ImageBuffer<S>,
    max_gx: ImageBuffer<S>,
    max_gy: ImageBuffer<S>,
}

impl<S: Scalar> FusionTargets<S> {
    /// `infrared` may have one or three channels.
    pub fn new(visible: ImageBuffer<S>, infrared: ImageBuffer<S>) -> Result<Self> {
        let infrared = infrared.to_rgb();
        let visible = visible.to_rgb();
        visible.ensure_same_dims(&infrared)?;
        let max_vt = visible.max_with(&infrared)?;
        let (max_gx, max_gy) = sobel(&max_vt);
        Ok(Self {
            visible,
            infrared,
            max_vt,
            max_gx,
            max_gy,
        })
    }
}

/// `λ₁‖F − max(V,T)‖₁ + λ₂[(1 − SSIM(F,T)) + (1 − SSIM(F,V))]`.
pub fn fusion_intensity_loss<S: Scalar>(
    fused: &ImageBuffer<S>,
    targets: &FusionTargets<S>,
    lambda1: S,
    lambda2: S,
) -> Result<LossValue<S>> {
    if !(lambda1 >= S::zero() && lambda2 >= S::zero()) {
        return Err(Error::InvalidParameter(format!(
            "loss weights must be non-negative, got {lambda1} and {lambda2}"
        )));
    }
    let l1 = l1_loss(fused, &targets.max_vt)?.scaled(lambda1);
    if lambda2 == S::zero() {
        return Ok(l1);
    }
    let st = dssim_loss(fused, &targets.infrared)?;
    let sv = dssim_loss(fused, &targets.visible)?;
    Ok(l1.add(st.add(sv).scaled(lambda2)))
}

/// Mean L1 between Sobel responses of `fused` and of `max(V,T)` over both
/// derivative planes.
pub fn fusion_gradient_loss<S: Scalar>(fused: &ImageBuffer<S>, targets: &FusionTargets<S>) -> Result<LossValue<S>> {
    fused.ensure_same_dims(&targets.max_vt)?;
    if fused.width < 3 || fused.height < 3 {
        return Err(Error::Shape(format!(
            "gradient loss needs at least 3x3 images, got {}x{}",
            fused.width, fused.height
        )));
    }
    let (gx, gy) = sobel(fused);
    let lx = l1_loss(&gx, &targets.max_gx)?;
    let ly = l1_loss(&gy, &targets.max_gy)?;
    let half = S::lit(0.5);
    Ok(LossValue {
        value: half * (lx.value + ly.value),
        d_image: sobel_adjoint(&lx.d_image, &ly.d_image).map(|v| v * half),
    })
}

/// Intensity plus gradient terms.
pub fn stage2_loss<S: Scalar>(
    fused: &ImageBuffer<S>,
    targets: &FusionTargets<S>,
    lambda1: S,
    lambda2: S,
) -> Result<LossValue<S>> {
    Ok(fusion_intensity_loss(fused, targets, lambda1, lambda2)?.add(fusion_gradient_loss(fused, targets)?))
}
