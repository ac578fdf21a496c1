use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::checkpoint::save_stage1_checkpoint;
use super::config::TrainConfig;
use super::density::{densify_and_prune, DensifyReport, GradStats};
use super::params::{flatten_gradients, flatten_primitives, param_stride, unflatten_primitives, LrGroups};
use super::sampler::ViewSampler;
use crate::dataio::TrainingView;
use crate::error::{Error, Result};
use crate::evalmetrics::psnr;
use crate::geometry::{norm3, sub3, Camera, Vec3, SH_C0};
use crate::image::ImageBuffer;
use crate::losses::{modality_loss, stage1_loss};
use crate::rasterizer::{render_single, render_single_backward, GradientRequest, RenderOutput, RenderSettings};
use crate::scalar::Scalar;
use crate::scene::{GaussianPrimitive, Modality, MultimodalScene};

/// One stage-1 iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Record {
    pub iter: usize,
    pub view: String,
    /// Balanced total `γ·L_visible + (1 − γ)·L_infrared`.
    pub loss: f64,
    pub loss_visible: f64,
    pub loss_infrared: f64,
    #[serde(with = "crate::evalmetrics::inf_as_null")]
    pub psnr_visible: f64,
    #[serde(with = "crate::evalmetrics::inf_as_null")]
    pub psnr_infrared: f64,
    pub gamma: f64,
    pub n_visible: usize,
    pub n_infrared: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Result<S> {
    pub scene: MultimodalScene<S>,
    pub curve: Vec<Stage1Record>,
    pub densify_reports: Vec<DensifyReport>,
}

/// Radius of the camera rig: 1.1 × the largest camera-centre distance
/// from the centroid of all centres (1 for a single camera).
pub fn scene_extent<S: Scalar>(cameras: &[Camera<S>]) -> S {
    let centers: Vec<Vec3<S>> = cameras.iter().map(|c| c.center()).collect();
    if centers.is_empty() {
        return S::one();
    }
    let n = S::from_usize(centers.len()).unwrap();
    let centroid: Vec3<S> = std::array::from_fn(|k| centers.iter().fold(S::zero(), |a, c| a + c[k]) / n);
    let r = centers.iter().fold(S::zero(), |a, c| a.max(norm3(&sub3(c, &centroid))));
    if r > S::zero() {
        S::lit(1.1) * r
    } else {
        S::one()
    }
}

/// Mean colour of `p` over the views in which it projects inside the image.
fn sample_color<S: Scalar>(p: &Vec3<S>, views: &[TrainingView<S>], pick: impl Fn(&TrainingView<S>) -> &ImageBuffer<S>) -> [S; 3] {
    let mut acc = [S::zero(); 3];
    let mut count = 0usize;
    for v in views {
        let cam = &v.camera;
        let q = cam.world_to_cam_point(p);
        if q[2] <= cam.znear {
            continue;
        }
        let x = (cam.fx * q[0] / q[2] + cam.cx).round();
        let y = (cam.fy * q[1] / q[2] + cam.cy).round();
        if x < S::zero() || y < S::zero() {
            continue;
        }
        let (x, y) = (x.to_usize().unwrap(), y.to_usize().unwrap());
        let img = pick(v);
        if x >= img.width || y >= img.height {
            continue;
        }
        for (ch, a) in acc.iter_mut().enumerate() {
            *a += img.get(x, y, ch.min(img.channels - 1));
        }
        count += 1;
    }
    if count == 0 {
        return [S::lit(0.5); 3];
    }
    let n = S::from_usize(count).unwrap();
    acc.map(|a| (a / n).max(S::lit(0.02)).min(S::lit(0.98)))
}

/// Starting scene: both modalities share `points` (or `random_init_points`
/// uniform samples in a cube around the rig centroid when empty), with
/// k-NN scales, opacity 0.1 and colours sampled from the training images.
pub fn initial_scene<S: Scalar>(views: &[TrainingView<S>], points: &[Vec3<S>], config: &TrainConfig) -> Result<MultimodalScene<S>> {
    if views.is_empty() {
        return Err(Error::Dataset("no training views".into()));
    }
    let owned;
    let points = if points.is_empty() {
        let cams: Vec<Camera<S>> = views.iter().map(|v| v.camera.clone()).collect();
        let centers: Vec<Vec3<S>> = cams.iter().map(|c| c.center()).collect();
        let n = S::from_usize(centers.len()).unwrap();
        let centroid: Vec3<S> = std::array::from_fn(|k| centers.iter().fold(S::zero(), |a, c| a + c[k]) / n);
        let half = scene_extent(&cams).to_f64().unwrap() / 3.0;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_1417);
        owned = (0..config.random_init_points.max(1))
            .map(|_| std::array::from_fn(|k| centroid[k] + S::lit(rng.gen_range(-half..half))))
            .collect::<Vec<Vec3<S>>>();
        &owned[..]
    } else {
        points
    };
    let mut scene = MultimodalScene::from_shared_points(points, config.sh_degree, [S::lit(0.5); 3], [S::lit(0.5); 3]);
    for (p, prim) in points.iter().zip(scene.visible.iter_mut()) {
        set_base_color(prim, sample_color(p, views, |v| &v.visible));
    }
    for (p, prim) in points.iter().zip(scene.infrared.iter_mut()) {
        set_base_color(prim, sample_color(p, views, |v| &v.infrared));
    }
    Ok(scene)
}

fn set_base_color<S: Scalar>(p: &mut GaussianPrimitive<S>, rgb: [S; 3]) {
    for (ch, c) in rgb.into_iter().enumerate() {
        p.sh[ch] = (c - S::lit(0.5)) / S::lit(SH_C0);
    }
}

/// Optimizer state for one modality's primitives.
#[derive(Clone, Debug)]
pub struct ModalityTrainer<S> {
    pub prims: Vec<GaussianPrimitive<S>>,
    pub modality: Modality,
    pub sh_degree: usize,
    pub adam: AdamState<S>,
    pub stats: GradStats<S>,
    rng: ChaCha8Rng,
}

impl<S: Scalar> ModalityTrainer<S> {
    pub fn new(prims: Vec<GaussianPrimitive<S>>, modality: Modality, sh_degree: usize, seed: u64) -> Self {
        let n = prims.len();
        Self {
            adam: AdamState::new(n * param_stride(sh_degree)),
            stats: GradStats::new(n),
            prims,
            modality,
            sh_degree,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn render(&self, cam: &Camera<S>, settings: &RenderSettings<S>) -> Result<RenderOutput<S>> {
        render_single(&self.prims, self.sh_degree, cam, settings)
    }

    /// Backpropagates `d_image` through the last render, accumulates the
    /// densification statistics and takes one Adam step.
    pub fn apply(
        &mut self,
        cam: &Camera<S>,
        forward: &RenderOutput<S>,
        d_image: &ImageBuffer<S>,
        settings: &RenderSettings<S>,
        lr: &LrGroups<S>,
    ) -> Result<()> {
        let grads = render_single_backward(
            &self.prims,
            self.sh_degree,
            cam,
            forward,
            d_image,
            settings,
            GradientRequest { geometry: true },
        )?;
        if let Some(g) = &grads.geometry {
            let half_w = S::lit(0.5 * cam.width as f64);
            let half_h = S::lit(0.5 * cam.height as f64);
            for (i, d) in g.d_mean2d.iter().enumerate() {
                if grads.touched[i] {
                    let gx = d[0] * half_w;
                    let gy = d[1] * half_h;
                    self.stats.add(i, (gx * gx + gy * gy).sqrt());
                }
            }
        }
        let flat_grads = flatten_gradients(&grads, self.prims.len(), self.sh_degree);
        let mut flat = flatten_primitives(&self.prims, self.sh_degree);
        adam_step(&mut flat, &flat_grads, &mut self.adam, |i| lr.rate(i))?;
        unflatten_primitives(&flat, &mut self.prims, self.sh_degree)
    }

    /// Densify and prune, carrying Adam moments over to survivors and
    /// resetting the gradient statistics.
    pub fn densify(&mut self, config: &super::config::DensifyConfig, extent: S) -> DensifyReport {
        let (prims, sources, report) = densify_and_prune(&self.prims, &self.stats, config, extent, &mut self.rng);
        self.adam.remap(&sources, param_stride(self.sh_degree));
        self.prims = prims;
        self.stats = GradStats::new(self.prims.len());
        report
    }
}

fn check_views<S: Scalar>(views: &[TrainingView<S>]) -> Result<()> {
    if views.is_empty() {
        return Err(Error::Dataset("no training views".into()));
    }
    Ok(())
}

fn densify_now(config: &TrainConfig, iter: usize) -> bool {
    let d = &config.densify;
    d.enabled && iter >= d.from_iter && iter <= config.densify_until() && iter % d.interval == 0
}

fn position_lr(config: &TrainConfig, iter: usize, extent: f64) -> f64 {
    config.lr.position_at(iter, config.stage1_iters) * extent
}

/// Stage 1: each modality is fitted to its own images with the balanced
/// loss, `γ = M / (N + M)` recomputed from the current counts every step.
pub fn train_stage1<S: Scalar>(
    views: &[TrainingView<S>],
    init: MultimodalScene<S>,
    config: &TrainConfig,
) -> Result<Stage1Result<S>> {
    config.validate()?;
    check_views(views)?;
    init.validate()?;
    let sh_degree = init.sh_degree;
    let settings = RenderSettings::default();
    let cams: Vec<Camera<S>> = views.iter().map(|v| v.camera.clone()).collect();
    let extent = scene_extent(&cams);
    let mut vis = ModalityTrainer::new(init.visible, Modality::Visible, sh_degree, config.seed.wrapping_add(1));
    let mut ir = ModalityTrainer::new(init.infrared, Modality::Infrared, sh_degree, config.seed.wrapping_add(2));
    let mut sampler = ViewSampler::new(views.len(), config.seed);
    let mut curve = Vec::with_capacity(config.stage1_iters);
    let mut reports = Vec::new();
    for iter in 1..=config.stage1_iters {
        let (n, m) = (vis.prims.len(), ir.prims.len());
        if n + m == 0 {
            return Err(Error::Diverged(format!("all primitives were pruned by iteration {iter}")));
        }
        let gamma = S::from_usize(m).unwrap() / S::from_usize(n + m).unwrap();
        let view = &views[sampler.next_index()];
        let fv = vis.render(&view.camera, &settings)?;
        let ft = ir.render(&view.camera, &settings)?;
        let loss = stage1_loss(&view.visible, &fv.image, &view.infrared, &ft.image, gamma)?;
        if !loss.value.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite stage-1 loss at iteration {iter} (view {}, visible {}, infrared {})",
                view.name, loss.visible, loss.infrared
            )));
        }
        let lr = LrGroups::new(&config.lr, position_lr(config, iter, extent.as_f64()), sh_degree);
        vis.apply(&view.camera, &fv, &loss.d_visible_render, &settings, &lr)?;
        ir.apply(&view.camera, &ft, &loss.d_infrared_render, &settings, &lr)?;
        curve.push(Stage1Record {
            iter,
            view: view.name.clone(),
            loss: loss.value.as_f64(),
            loss_visible: loss.visible.as_f64(),
            loss_infrared: loss.infrared.as_f64(),
            psnr_visible: psnr(&fv.image, &view.visible, 1.0)?,
            psnr_infrared: psnr(&ft.image, &view.infrared, 1.0)?,
            gamma: gamma.as_f64(),
            n_visible: n,
            n_infrared: m,
        });
        if densify_now(config, iter) {
            reports.push(vis.densify(&config.densify, extent));
            reports.push(ir.densify(&config.densify, extent));
        }
        if let Some(dir) = &config.checkpoint.dir {
            let interval = config.checkpoint.interval;
            if interval > 0 && iter % interval == 0 && iter < config.stage1_iters {
                let scene = assemble(&vis, &ir, sh_degree)?;
                save_stage1_checkpoint(dir, &scene, &curve, config, iter, false)?;
            }
        }
    }
    let scene = assemble(&vis, &ir, sh_degree)?;
    if let Some(dir) = &config.checkpoint.dir {
        save_stage1_checkpoint(dir, &scene, &curve, config, config.stage1_iters, true)?;
    }
    Ok(Stage1Result {
        scene,
        curve,
        densify_reports: reports,
    })
}

fn assemble<S: Scalar>(vis: &ModalityTrainer<S>, ir: &ModalityTrainer<S>, sh_degree: usize) -> Result<MultimodalScene<S>> {
    let scene = MultimodalScene {
        visible: vis.prims.clone(),
        infrared: ir.prims.clone(),
        sh_degree,
    };
    scene.validate()?;
    Ok(scene)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingleModalityResult<S> {
    pub prims: Vec<GaussianPrimitive<S>>,
    /// Unweighted modality loss per iteration.
    pub losses: Vec<f64>,
}

/// Fits one modality alone with its loss gradient scaled by `weight`, using
/// the same view schedule and learning rates as [`train_stage1`].
pub fn train_single_modality<S: Scalar>(
    views: &[TrainingView<S>],
    prims: Vec<GaussianPrimitive<S>>,
    modality: Modality,
    sh_degree: usize,
    weight: S,
    config: &TrainConfig,
) -> Result<SingleModalityResult<S>> {
    config.validate()?;
    check_views(views)?;
    let settings = RenderSettings::default();
    let cams: Vec<Camera<S>> = views.iter().map(|v| v.camera.clone()).collect();
    let extent = scene_extent(&cams);
    let seed = match modality {
        Modality::Visible => config.seed.wrapping_add(1),
        Modality::Infrared => config.seed.wrapping_add(2),
    };
    let mut trainer = ModalityTrainer::new(prims, modality, sh_degree, seed);
    let mut sampler = ViewSampler::new(views.len(), config.seed);
    let mut losses = Vec::with_capacity(config.stage1_iters);
    for iter in 1..=config.stage1_iters {
        let view = &views[sampler.next_index()];
        let target = match modality {
            Modality::Visible => &view.visible,
            Modality::Infrared => &view.infrared,
        };
        let fwd = trainer.render(&view.camera, &settings)?;
        let loss = modality_loss(target, &fwd.image)?;
        if !loss.value.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss at iteration {iter} (view {})", view.name)));
        }
        let d = loss.d_image.map(|v| v * weight);
        let lr = LrGroups::new(&config.lr, position_lr(config, iter, extent.as_f64()), sh_degree);
        trainer.apply(&view.camera, &fwd, &d, &settings, &lr)?;
        losses.push(loss.value.as_f64());
        if densify_now(config, iter) {
            trainer.densify(&config.densify, extent);
        }
    }
    Ok(SingleModalityResult {
        prims: trainer.prims,
        losses,
    })
}
