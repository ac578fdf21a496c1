//! Tile-based splatting of Gaussian sets.
//!
//! Both the single-modality and the fused renderer composite front to back,
//! `C(x) = Σ_k c_k a_k Π_{j<k} (1 - a_j)` with `a_k = τ_k · α_k · G_k(x)`,
//! where `τ ≡ 1` for single-modality renders. Contributions with `a_k < 1/255`
//! are skipped and a pixel stops once its transmittance drops below `1e-4`.
//! Sorting is global (over both modalities) by `(depth, concatenated index)`.
//!
//! The backward pass re-walks each pixel's chain from the tile lists and
//! uses the forward pass's stop positions, so no per-contributor state is
//! retained between the passes.

mod composite;
mod tiles;

pub use composite::{RenderOutput, SplatGradients, GeometryGradients};
pub use tiles::{depth_order, footprint, tile_bin, PixelRect, Splat, TileBins};

use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};
use crate::geometry::{invert_cov2d, project_gaussian, sh_coeff_count, Camera};
use crate::image::ImageBuffer;
use crate::scalar::Scalar;
use crate::scene::{GaussianPrimitive, MultimodalScene};

#[derive(Clone, Debug, PartialEq)]
pub struct RenderSettings<S> {
    pub tile_size: usize,
    pub background: [S; 3],
    pub alpha_cutoff: S,
    pub min_transmittance: S,
}

impl<S: Scalar> Default for RenderSettings<S> {
    fn default() -> Self {
        Self {
            tile_size: 16,
            background: [S::zero(); 3],
            alpha_cutoff: S::lit(1.0 / 255.0),
            min_transmittance: S::lit(1e-4),
        }
    }
}

/// Projects each primitive; `None` marks culled or degenerate ones.
pub fn project_splats<S: Scalar>(
    prims: &[&GaussianPrimitive<S>],
    sh_degree: usize,
    cam: &Camera<S>,
) -> Result<Vec<Option<Splat<S>>>> {
    let d_c = sh_coeff_count(sh_degree);
    prims
        .iter()
        .map(|p| {
            if p.sh.len() != d_c {
                return Err(Error::Shape(format!(
                    "primitive has {} SH coefficients, expected {d_c}",
                    p.sh.len()
                )));
            }
            let cov = p.covariance()?;
            let Some(proj) = project_gaussian(&p.mean, &cov, cam) else {
                return Ok(None);
            };
            let Some(conic) = invert_cov2d(&proj.cov2d) else {
                return Ok(None);
            };
            Ok(Some(Splat {
                mean2d: proj.mean2d,
                cov2d: proj.cov2d,
                conic,
                depth: proj.depth,
                color: p.color(sh_degree, cam)?,
                opacity: p.opacity(),
            }))
        })
        .collect()
}

fn fingerprint<S: Scalar>(prims: &[&GaussianPrimitive<S>], cam: &Camera<S>, tau: Option<&[S]>, settings: &RenderSettings<S>) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    let mut put = |v: S| v.integer_decode().hash(&mut h);
    for p in prims {
        p.mean.iter().chain(&p.log_scale).chain(&p.rotation.to_array()).chain(&p.sh).for_each(|&v| put(v));
        put(p.opacity_logit);
    }
    cam.world_to_camera.iter().flatten().for_each(|&v| put(v));
    [cam.fx, cam.fy, cam.cx, cam.cy].iter().for_each(|&v| put(v));
    if let Some(t) = tau {
        t.iter().for_each(|&v| put(v));
    }
    settings.background.iter().for_each(|&v| put(v));
    put(settings.alpha_cutoff);
    put(settings.min_transmittance);
    let mut h2 = std::collections::hash_map::DefaultHasher::new();
    h.finish().hash(&mut h2);
    (prims.len(), cam.width, cam.height, settings.tile_size, tau.is_some()).hash(&mut h2);
    h2.finish()
}

struct Prepared<S> {
    splats: Vec<Option<Splat<S>>>,
    effective: Vec<S>,
    bins: TileBins,
    fingerprint: u64,
}

fn prepare<S: Scalar>(
    prims: &[&GaussianPrimitive<S>],
    sh_degree: usize,
    cam: &Camera<S>,
    tau: Option<&[S]>,
    settings: &RenderSettings<S>,
) -> Result<Prepared<S>> {
    if let Some(t) = tau {
        if t.len() != prims.len() {
            return Err(Error::Shape(format!(
                "tau has {} entries for {} primitives",
                t.len(),
                prims.len()
            )));
        }
    }
    let splats = project_splats(prims, sh_degree, cam)?;
    let effective: Vec<S> = splats
        .iter()
        .enumerate()
        .map(|(i, s)| match s {
            Some(s) => s.opacity * tau.map_or(S::one(), |t| t[i]),
            None => S::zero(),
        })
        .collect();
    let bins = tile_bin(
        &splats,
        &effective,
        settings.tile_size,
        cam.width as usize,
        cam.height as usize,
        settings.alpha_cutoff,
    );
    Ok(Prepared {
        fingerprint: fingerprint(prims, cam, tau, settings),
        splats,
        effective,
        bins,
    })
}

/// Standard single-set render (all modulation weights equal to one).
pub fn render_single<S: Scalar>(
    prims: &[GaussianPrimitive<S>],
    sh_degree: usize,
    cam: &Camera<S>,
    settings: &RenderSettings<S>,
) -> Result<RenderOutput<S>> {
    let refs: Vec<&GaussianPrimitive<S>> = prims.iter().collect();
    render_refs(&refs, sh_degree, cam, None, settings)
}

/// Fused render of both modalities with per-primitive modulation `tau`,
/// indexed in concatenation order (visible first).
pub fn render_fused<S: Scalar>(
    scene: &MultimodalScene<S>,
    cam: &Camera<S>,
    tau: &[S],
    settings: &RenderSettings<S>,
) -> Result<RenderOutput<S>> {
    let refs: Vec<&GaussianPrimitive<S>> = scene.iter_concat().collect();
    render_refs(&refs, scene.sh_degree, cam, Some(tau), settings)
}

pub fn render_refs<S: Scalar>(
    prims: &[&GaussianPrimitive<S>],
    sh_degree: usize,
    cam: &Camera<S>,
    tau: Option<&[S]>,
    settings: &RenderSettings<S>,
) -> Result<RenderOutput<S>> {
    let prep = prepare(prims, sh_degree, cam, tau, settings)?;
    Ok(composite::forward(&prep.splats, &prep.effective, &prep.bins, cam, settings, prep.fingerprint))
}

/// Which parameter gradients the backward pass should produce.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GradientRequest {
    /// Also propagate to means, rotations and log-scales.
    pub geometry: bool,
}

pub fn render_single_backward<S: Scalar>(
    prims: &[GaussianPrimitive<S>],
    sh_degree: usize,
    cam: &Camera<S>,
    forward: &RenderOutput<S>,
    d_image: &ImageBuffer<S>,
    settings: &RenderSettings<S>,
    request: GradientRequest,
) -> Result<SplatGradients<S>> {
    let refs: Vec<&GaussianPrimitive<S>> = prims.iter().collect();
    backward_refs(&refs, sh_degree, cam, None, forward, d_image, settings, request)
}

/// Gradients of a scalar loss with respect to SH coefficients, opacity
/// logits and `tau`, given `d_image = ∂L/∂image` for the matching
/// [`render_fused`] call.
pub fn render_fused_backward<S: Scalar>(
    scene: &MultimodalScene<S>,
    cam: &Camera<S>,
    tau: &[S],
    forward: &RenderOutput<S>,
    d_image: &ImageBuffer<S>,
    settings: &RenderSettings<S>,
    request: GradientRequest,
) -> Result<SplatGradients<S>> {
    let refs: Vec<&GaussianPrimitive<S>> = scene.iter_concat().collect();
    backward_refs(&refs, scene.sh_degree, cam, Some(tau), forward, d_image, settings, request)
}

#[allow(clippy::too_many_arguments)]
pub fn backward_refs<S: Scalar>(
    prims: &[&GaussianPrimitive<S>],
    sh_degree: usize,
    cam: &Camera<S>,
    tau: Option<&[S]>,
    forward: &RenderOutput<S>,
    d_image: &ImageBuffer<S>,
    settings: &RenderSettings<S>,
    request: GradientRequest,
) -> Result<SplatGradients<S>> {
    let prep = prepare(prims, sh_degree, cam, tau, settings)?;
    if prep.fingerprint != forward.fingerprint {
        return Err(Error::Contract(
            "primitives, camera, tau or settings differ from the forward call".into(),
        ));
    }
    if !d_image.same_dims(&forward.image) {
        return Err(Error::Contract(format!(
            "d_image is {}x{}x{}, forward image is {}x{}x{}",
            d_image.width, d_image.height, d_image.channels, forward.image.width, forward.image.height, forward.image.channels
        )));
    }
    composite::backward(prims, sh_degree, cam, tau, &prep.splats, &prep.effective, &prep.bins, forward, d_image, settings, request)
}
