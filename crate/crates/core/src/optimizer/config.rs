use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cma::CmaConfig;
use crate::error::{Error, Result};

/// Per-group learning rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    /// Position rate at the first step, multiplied by the scene extent.
    pub position_init: f64,
    /// Position rate reached at `position_max_steps` (log-linear decay).
    pub position_final: f64,
    /// Decay horizon; `None` uses the stage-1 iteration count.
    pub position_max_steps: Option<usize>,
    pub sh_dc: f64,
    /// Higher-order SH coefficients use `sh_dc / sh_rest_divisor`.
    pub sh_rest_divisor: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
    pub cma: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position_init: 1.6e-4,
            position_final: 1.6e-6,
            position_max_steps: None,
            sh_dc: 2.5e-3,
            sh_rest_divisor: 20.0,
            opacity: 5e-2,
            scale: 5e-3,
            rotation: 1e-3,
            cma: 1e-3,
        }
    }
}

impl LearningRates {
    /// Exponentially decayed position rate at `step` (before extent scaling).
    pub fn position_at(&self, step: usize, default_horizon: usize) -> f64 {
        let horizon = self.position_max_steps.unwrap_or(default_horizon).max(1);
        let t = (step as f64 / horizon as f64).clamp(0.0, 1.0);
        (self.position_init.ln() * (1.0 - t) + self.position_final.ln() * t).exp()
    }
}

/// Adaptive density control thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensifyConfig {
    pub enabled: bool,
    pub from_iter: usize,
    /// Last iteration with densification; `None` means half the stage-1 run.
    pub until_iter: Option<usize>,
    pub interval: usize,
    /// Mean view-space (NDC) positional gradient norm that triggers
    /// cloning or splitting.
    pub grad_threshold: f64,
    /// Primitives with max scale above this fraction of the scene extent
    /// are split rather than cloned.
    pub percent_dense: f64,
    pub min_opacity: f64,
    /// Clone offset standard deviation relative to the primitive's max scale.
    pub clone_jitter: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            from_iter: 500,
            until_iter: None,
            interval: 100,
            grad_threshold: 2e-4,
            percent_dense: 0.01,
            min_opacity: 0.005,
            clone_jitter: 0.01,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub dir: Option<PathBuf>,
    /// Write an intermediate checkpoint every `interval` iterations (0: only
    /// at the end).
    pub interval: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub sh_degree: usize,
    pub lr: LearningRates,
    pub densify: DensifyConfig,
    pub cma_hidden: (usize, usize),
    pub cma: CmaConfig,
    /// Number of random initial points when the dataset provides none.
    pub random_init_points: usize,
    /// Also fine-tune SH coefficients and opacity logits in stage 2.
    pub stage2_finetune: bool,
    pub checkpoint: CheckpointConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            stage1_iters: 15_000,
            stage2_iters: 15_000,
            lambda1: 1.0,
            lambda2: 2.0,
            sh_degree: 1,
            lr: LearningRates::default(),
            densify: DensifyConfig::default(),
            cma_hidden: (64, 64),
            cma: CmaConfig::default(),
            random_init_points: 1000,
            stage2_finetune: false,
            checkpoint: CheckpointConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.stage1_iters == 0 || self.stage2_iters == 0 {
            return bad("iteration counts must be positive".into());
        }
        let lr = &self.lr;
        let rates = [
            ("position_init", lr.position_init),
            ("position_final", lr.position_final),
            ("sh_dc", lr.sh_dc),
            ("sh_rest_divisor", lr.sh_rest_divisor),
            ("opacity", lr.opacity),
            ("scale", lr.scale),
            ("rotation", lr.rotation),
            ("cma", lr.cma),
        ];
        for (name, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("learning rate {name} must be positive, got {v}"));
            }
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad(format!("loss weights must be non-negative, got {} and {}", self.lambda1, self.lambda2));
        }
        if self.sh_degree > crate::geometry::MAX_SH_DEGREE {
            return bad(format!("SH degree {} exceeds {}", self.sh_degree, crate::geometry::MAX_SH_DEGREE));
        }
        if self.cma_hidden.0 == 0 || self.cma_hidden.1 == 0 {
            return bad("modulator hidden sizes must be positive".into());
        }
        if self.densify.enabled && self.densify.interval == 0 {
            return bad("densification interval must be positive".into());
        }
        Ok(())
    }

    pub fn densify_until(&self) -> usize {
        self.densify.until_iter.unwrap_or(self.stage1_iters / 2)
    }
}
