//! Checkpoint directory layout: `scene.ply`, `cma.bin`, per-stage curve
//! JSON files and a per-stage marker JSON written last. A directory whose
//! marker is missing or has `complete: false` holds no finished result.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::stage1::Stage1Record;
use super::stage2::Stage2Record;
use crate::cma::{save_cma, CmaParameters};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::scalar::Scalar;
use crate::scene::{save_scene, MultimodalScene};

pub const SCENE_FILE: &str = "scene.ply";
pub const CMA_FILE: &str = "cma.bin";
pub const STAGE1_CURVE_FILE: &str = "stage1_curve.json";
pub const STAGE2_CURVE_FILE: &str = "stage2_curve.json";
pub const STAGE1_MARKER: &str = "stage1_checkpoint.json";
pub const STAGE2_MARKER: &str = "stage2_checkpoint.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMarker {
    pub stage: u8,
    pub iteration: usize,
    pub complete: bool,
    pub n_visible: usize,
    pub n_infrared: usize,
    pub config: TrainConfig,
}

fn remove_marker(dir: &Path, name: &str) -> Result<()> {
    let path = dir.join(name);
    match std::fs::remove_file(&path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    write_atomic(path, &text)
}

pub fn save_stage1_checkpoint<S: Scalar>(
    dir: &Path,
    scene: &MultimodalScene<S>,
    curve: &[Stage1Record],
    config: &TrainConfig,
    iteration: usize,
    complete: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    remove_marker(dir, STAGE1_MARKER)?;
    save_scene(scene, &dir.join(SCENE_FILE))?;
    write_json(&dir.join(STAGE1_CURVE_FILE), &curve)?;
    let (n_visible, n_infrared) = scene.counts();
    write_json(
        &dir.join(STAGE1_MARKER),
        &CheckpointMarker {
            stage: 1,
            iteration,
            complete,
            n_visible,
            n_infrared,
            config: config.clone(),
        },
    )
}

/// Writes `cma.bin` and the stage-2 curve; `scene` is also written when
/// stage 2 fine-tuned the Gaussians.
#[allow(clippy::too_many_arguments)]
pub fn save_stage2_checkpoint<S: Scalar>(
    dir: &Path,
    cma: &CmaParameters<S>,
    scene_counts: (usize, usize),
    finetuned: Option<&MultimodalScene<S>>,
    curve: &[Stage2Record],
    config: &TrainConfig,
    iteration: usize,
    complete: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    remove_marker(dir, STAGE2_MARKER)?;
    save_cma(cma, &dir.join(CMA_FILE))?;
    if let Some(scene) = finetuned {
        save_scene(scene, &dir.join(SCENE_FILE))?;
    }
    write_json(&dir.join(STAGE2_CURVE_FILE), &curve)?;
    write_json(
        &dir.join(STAGE2_MARKER),
        &CheckpointMarker {
            stage: 2,
            iteration,
            complete,
            n_visible: scene_counts.0,
            n_infrared: scene_counts.1,
            config: config.clone(),
        },
    )
}

/// Reads a stage marker; `None` when the file does not exist.
pub fn read_marker(dir: &Path, name: &str) -> Result<Option<CheckpointMarker>> {
    let path = dir.join(name);
    match std::fs::read(&path) {
        Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}
