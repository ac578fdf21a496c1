//! Two-stage training: per-modality reconstruction with adaptive density
//! control, then modulator training against the fusion loss with the
//! Gaussians frozen.

mod adam;
mod checkpoint;
mod config;
mod density;
mod params;
mod sampler;
mod stage1;
mod stage2;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{
    read_marker, save_stage1_checkpoint, save_stage2_checkpoint, CheckpointMarker, CMA_FILE, SCENE_FILE, STAGE1_CURVE_FILE,
    STAGE1_MARKER, STAGE2_CURVE_FILE, STAGE2_MARKER,
};
pub use config::{CheckpointConfig, DensifyConfig, LearningRates, TrainConfig};
pub use density::{densify_and_prune, DensifyReport, GradStats};
pub use params::{flatten_gradients, flatten_primitives, param_stride, unflatten_primitives, LrGroups};
pub use sampler::ViewSampler;
pub use stage1::{
    initial_scene, scene_extent, train_single_modality, train_stage1, ModalityTrainer, SingleModalityResult, Stage1Record,
    Stage1Result,
};
pub use stage2::{train_stage2, Stage2Record, Stage2Result};

/// Trailing moving average over `window` samples (shorter at the start).
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}
