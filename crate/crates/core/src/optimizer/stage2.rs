use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::checkpoint::save_stage2_checkpoint;
use super::config::TrainConfig;
use super::params::{flatten_gradients, flatten_primitives, param_stride, unflatten_primitives, LrGroups};
use super::sampler::ViewSampler;
use crate::cma::{cma_backward, cma_forward, CmaParameters};
use crate::dataio::TrainingView;
use crate::error::{Error, Result};
use crate::geometry::sh_coeff_count;
use crate::losses::{stage2_loss, FusionTargets};
use crate::rasterizer::{render_fused, render_fused_backward, GradientRequest, RenderSettings};
use crate::scalar::Scalar;
use crate::scene::MultimodalScene;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage2Record {
    pub iter: usize,
    pub view: String,
    pub loss: f64,
    pub mean_tau: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Result<S> {
    pub cma: CmaParameters<S>,
    pub curve: Vec<Stage2Record>,
    /// Fine-tuned scene when `stage2_finetune` is set, otherwise `None`
    /// (the input scene is untouched).
    pub scene: Option<MultimodalScene<S>>,
}

/// Stage 2: trains the modulator so that the fused render matches the
/// fusion targets of each training view.
pub fn train_stage2<S: Scalar>(
    scene: &MultimodalScene<S>,
    views: &[TrainingView<S>],
    config: &TrainConfig,
) -> Result<Stage2Result<S>> {
    config.validate()?;
    scene.validate()?;
    if views.is_empty() {
        return Err(Error::Dataset("no training views".into()));
    }
    if scene.is_empty() {
        return Err(Error::InvalidParameter("stage 2 needs a non-empty scene".into()));
    }
    let targets = views
        .iter()
        .map(|v| FusionTargets::new(v.visible.clone(), v.infrared.clone()))
        .collect::<Result<Vec<_>>>()?;
    let (lambda1, lambda2) = (S::lit(config.lambda1), S::lit(config.lambda2));
    let settings = RenderSettings::default();
    let d_c = sh_coeff_count(scene.sh_degree);
    let (h1, h2) = config.cma_hidden;
    let mut cma = CmaParameters::init(config.seed, d_c, h1, h2, config.cma)?;
    let mut cma_adam = AdamState::new(cma.param_count());
    let mut tuned = config.stage2_finetune.then(|| scene.clone());
    let stride = param_stride(scene.sh_degree);
    let mut scene_adam = AdamState::new(if tuned.is_some() { scene.len() * stride } else { 0 });
    let appearance_lr = LrGroups::new(&config.lr, 0.0, scene.sh_degree).appearance_only();
    let cma_lr = S::lit(config.lr.cma);
    let mut sampler = ViewSampler::new(views.len(), config.seed);
    let mut curve = Vec::with_capacity(config.stage2_iters);
    for iter in 1..=config.stage2_iters {
        let current = tuned.as_ref().unwrap_or(scene);
        let vi = sampler.next_index();
        let view = &views[vi];
        let tau = cma_forward(&cma, current)?;
        let fwd = render_fused(current, &view.camera, &tau, &settings)?;
        let loss = stage2_loss(&fwd.image, &targets[vi], lambda1, lambda2)?;
        if !loss.value.is_finite() {
            return Err(Error::Diverged(format!("non-finite stage-2 loss at iteration {iter} (view {})", view.name)));
        }
        let grads = render_fused_backward(current, &view.camera, &tau, &fwd, &loss.d_image, &settings, GradientRequest::default())?;
        let cg = cma_backward(&cma, current, &grads.d_tau, tuned.is_some())?;
        let mean_tau = tau.iter().map(|t| t.as_f64()).sum::<f64>() / tau.len() as f64;
        if let Some(sc) = tuned.as_mut() {
            let mut g = flatten_gradients(&grads, sc.len(), sc.sh_degree);
            if let Some(d_sh) = &cg.d_sh {
                for (i, block) in g.chunks_exact_mut(stride).enumerate() {
                    for k in 0..d_c {
                        block[stride - d_c + k] += d_sh[i * d_c + k];
                    }
                }
            }
            let mut all: Vec<_> = sc.iter_concat().cloned().collect();
            let mut flat = flatten_primitives(&all, sc.sh_degree);
            adam_step(&mut flat, &g, &mut scene_adam, |i| appearance_lr.rate(i))?;
            unflatten_primitives(&flat, &mut all, sc.sh_degree)?;
            let n = sc.visible.len();
            sc.infrared = all.split_off(n);
            sc.visible = all;
        }
        let mut flat = cma.to_flat();
        adam_step(&mut flat, &cg.d_params.to_flat(), &mut cma_adam, |_| cma_lr)?;
        cma.set_flat(&flat)?;
        curve.push(Stage2Record {
            iter,
            view: view.name.clone(),
            loss: loss.value.as_f64(),
            mean_tau,
        });
        if let Some(dir) = &config.checkpoint.dir {
            let interval = config.checkpoint.interval;
            if interval > 0 && iter % interval == 0 && iter < config.stage2_iters {
                save_stage2_checkpoint(dir, &cma, scene.counts(), tuned.as_ref(), &curve, config, iter, false)?;
            }
        }
    }
    if !cma.is_finite() {
        return Err(Error::Diverged("modulator parameters became non-finite".into()));
    }
    if let Some(dir) = &config.checkpoint.dir {
        save_stage2_checkpoint(dir, &cma, scene.counts(), tuned.as_ref(), &curve, config, config.stage2_iters, true)?;
    }
    Ok(Stage2Result {
        cma,
        curve,
        scene: tuned,
    })
}
