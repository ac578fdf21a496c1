//! Procedural multimodal scenes with known ground truth.
//!
//! Visible and infrared primitives share geometry. A third of them are "hot"
//! (bright in infrared, dark in visible); the rest carry colour texture in
//! visible and a dim, flat infrared response.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{load_dataset, CameraManifest, DatasetIndex, ManifestView, Split, INFRARED_DIR, MANIFEST_FILE, VISIBLE_DIR};
use super::png::{first_channel, write_image, BitDepth};
use crate::error::{Error, Result};
use crate::geometry::{Camera, Quaternion, SH_C0};
use crate::image::ImageBuffer;
use crate::rasterizer::{render_single, RenderSettings};
use crate::scalar::{logit, Scalar};
use crate::scene::{GaussianPrimitive, Modality, MultimodalScene};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_views: usize,
    pub n_gaussians: usize,
    pub width: u32,
    pub height: u32,
    /// Focal length in pixels.
    pub focal: f64,
    pub ring_radius: f64,
    /// Every `test_every`-th view is held out for testing (0 disables).
    pub test_every: usize,
    /// Standard deviation of the noise added to the exported init points.
    pub point_jitter: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_views: 12,
            n_gaussians: 30,
            width: 128,
            height: 128,
            focal: 128.0,
            ring_radius: 4.0,
            test_every: 4,
            point_jitter: 0.05,
        }
    }
}

/// Ground truth returned alongside a generated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene<S> {
    pub scene: MultimodalScene<S>,
    /// Per shared position: whether it belongs to a hot region.
    pub hot: Vec<bool>,
    pub cameras: Vec<Camera<S>>,
    pub names: Vec<String>,
    pub config: SyntheticConfig,
}

fn sh_from_rgb<S: Scalar>(rgb: [f64; 3], view_dep: [[f64; 3]; 3]) -> Vec<S> {
    let mut sh = Vec::with_capacity(12);
    sh.extend(rgb.iter().map(|&c| S::lit((c - 0.5) / SH_C0)));
    for row in view_dep {
        sh.extend(row.iter().map(|&v| S::lit(v)));
    }
    sh
}

/// Ground-truth scene and ring cameras for `config`, without touching disk.
pub fn synthetic_ground_truth<S: Scalar>(config: &SyntheticConfig) -> Result<SyntheticScene<S>> {
    if config.n_views < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 views, got {}", config.n_views)));
    }
    if config.n_gaussians == 0 || config.width == 0 || config.height == 0 {
        return Err(Error::InvalidParameter("synthetic scene needs primitives and a non-empty image".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut scene = MultimodalScene::new(1);
    let mut hot = Vec::with_capacity(config.n_gaussians);
    for i in 0..config.n_gaussians {
        let is_hot = i % 3 == 0;
        let mean = loop {
            let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0f64)];
            if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                break p;
            }
        };
        let log_scale: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.12f64..0.3).ln());
        let axis = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0f64)];
        let angle = rng.gen_range(0.0..PI);
        let rot = Quaternion::<f64>::from_axis_angle(axis, angle).to_array();
        let opacity: f64 = rng.gen_range(0.75..0.95);
        let (vis_rgb, ir_gray) = if is_hot {
            let dark: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.05..0.18));
            (dark, rng.gen_range(0.8..0.95))
        } else {
            let tex: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.25..0.95));
            (tex, rng.gen_range(0.12..0.3))
        };
        let view_dep: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-0.03..0.03)));
        let make = |sh: Vec<S>, modality| GaussianPrimitive {
            mean: mean.map(S::lit),
            rotation: Quaternion::from_array(rot.map(S::lit)),
            log_scale: log_scale.map(S::lit),
            opacity_logit: logit(S::lit(opacity)),
            sh,
            modality,
        };
        scene.visible.push(make(sh_from_rgb(vis_rgb, view_dep), Modality::Visible));
        scene.infrared.push(make(sh_from_rgb([ir_gray; 3], [[0.0; 3]; 3]), Modality::Infrared));
        hot.push(is_hot);
    }
    let mut cameras = Vec::with_capacity(config.n_views);
    let mut names = Vec::with_capacity(config.n_views);
    for i in 0..config.n_views {
        let theta = 2.0 * PI * i as f64 / config.n_views as f64;
        let elevation = if i % 2 == 0 { -0.9 } else { -0.3 };
        let eye = [config.ring_radius * theta.cos(), elevation, config.ring_radius * theta.sin()];
        cameras.push(Camera::look_at(
            eye.map(S::lit),
            [S::zero(); 3],
            [S::zero(), -S::one(), S::zero()],
            S::lit(config.focal),
            S::lit(config.focal),
            config.width,
            config.height,
        )?);
        names.push(format!("view_{i:03}"));
    }
    Ok(SyntheticScene {
        scene,
        hot,
        cameras,
        names,
        config: config.clone(),
    })
}

impl<S: Scalar> SyntheticScene<S> {
    pub fn render_visible(&self, view: usize) -> Result<ImageBuffer<S>> {
        Ok(render_single(&self.scene.visible, 1, &self.cameras[view], &RenderSettings::default())?.image)
    }

    /// Infrared render (three identical channels).
    pub fn render_infrared(&self, view: usize) -> Result<ImageBuffer<S>> {
        Ok(render_single(&self.scene.infrared, 1, &self.cameras[view], &RenderSettings::default())?.image)
    }

    /// Pixels whose compositing weight is dominated (> 0.5) by hot primitives.
    pub fn hot_mask(&self, view: usize) -> Result<Vec<bool>> {
        let mut marked = self.scene.visible.clone();
        for (p, &h) in marked.iter_mut().zip(&self.hot) {
            p.sh.iter_mut().for_each(|v| *v = S::zero());
            let c = if h { S::lit(0.5) } else { S::lit(-0.5) } / S::lit(SH_C0);
            p.sh[..3].iter_mut().for_each(|v| *v = c);
        }
        let img = render_single(&marked, 1, &self.cameras[view], &RenderSettings::default())?.image;
        Ok(img.data.iter().step_by(3).map(|&v| v > S::lit(0.5)).collect())
    }

    pub fn split_of(&self, view: usize) -> Split {
        let k = self.config.test_every;
        if k > 0 && view % k == k - 1 {
            Split::Test
        } else {
            Split::Train
        }
    }
}

/// Renders the ground truth from every ring camera and writes a complete
/// dataset (manifest, 8-bit RGB visible, 16-bit grayscale infrared) to
/// `out_dir`.
pub fn generate_synthetic_with<S: Scalar>(
    config: &SyntheticConfig,
    out_dir: &Path,
) -> Result<(DatasetIndex<S>, SyntheticScene<S>)> {
    let gt = synthetic_ground_truth::<S>(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_9a11);
    let points = gt
        .scene
        .visible
        .iter()
        .map(|p| {
            std::array::from_fn(|k| {
                let noise: f64 = rng.gen_range(-1.0..1.0) * config.point_jitter * 3f64.sqrt();
                p.mean[k].as_f64() + noise
            })
        })
        .collect();
    let mut views = Vec::with_capacity(config.n_views);
    for (i, cam) in gt.cameras.iter().enumerate() {
        let name = &gt.names[i];
        write_image(&out_dir.join(VISIBLE_DIR).join(format!("{name}.png")), &gt.render_visible(i)?, BitDepth::Eight)?;
        let ir = first_channel(&gt.render_infrared(i)?);
        write_image(&out_dir.join(INFRARED_DIR).join(format!("{name}.png")), &ir, BitDepth::Sixteen)?;
        views.push(ManifestView::from_camera(name, cam, gt.split_of(i)));
    }
    CameraManifest {
        version: 1,
        points,
        views,
    }
    .write(&out_dir.join(MANIFEST_FILE))?;
    Ok((load_dataset(out_dir)?, gt))
}

/// [`generate_synthetic_with`] using the default ring and image size.
pub fn generate_synthetic<S: Scalar>(
    seed: u64,
    n_views: usize,
    n_gaussians: usize,
    out_dir: &Path,
) -> Result<(DatasetIndex<S>, SyntheticScene<S>)> {
    let config = SyntheticConfig {
        seed,
        n_views,
        n_gaussians,
        ..SyntheticConfig::default()
    };
    generate_synthetic_with(&config, out_dir)
}
