//! `cameras.json` dataset manifest.
//!
//! A dataset root contains `cameras.json`, `visible/<name>.png` and
//! `infrared/<name>.png`. The manifest schema (version 1):
//!
//! ```json
//! {
//!   "version": 1,
//!   "points": [[0.1, -0.2, 0.3]],
//!   "views": [
//!     {
//!       "name": "view_000",
//!       "width": 128, "height": 128,
//!       "fx": 128.0, "fy": 128.0, "cx": 64.0, "cy": 64.0,
//!       "world_to_camera": [[1,0,0,0],[0,1,0,0],[0,0,1,4],[0,0,0,1]],
//!       "split": "train",
//!       "znear": 0.01, "zfar": 100.0
//!     }
//!   ]
//! }
//! ```
//!
//! - `points` (optional): sparse initialisation points in world space.
//! - `world_to_camera`: row-major 4×4 pose; camera looks down +z with +y
//!   pointing down the image.
//! - `split` (optional, default `"train"`): `"train"` or `"test"`.
//! - `znear`/`zfar` (optional): clipping planes, default 0.01 and 100.
//!
//! Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::png::read_image_rgb;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::geometry::{Camera, Vec3};
use crate::image::ImageBuffer;
use crate::scalar::Scalar;

pub const MANIFEST_FILE: &str = "cameras.json";
pub const VISIBLE_DIR: &str = "visible";
pub const INFRARED_DIR: &str = "infrared";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestView {
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub world_to_camera: [[f64; 4]; 4],
    #[serde(default)]
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub znear: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zfar: Option<f64>,
}

impl ManifestView {
    pub fn from_camera<S: Scalar>(name: &str, cam: &Camera<S>, split: Split) -> Self {
        Self {
            name: name.to_string(),
            width: cam.width,
            height: cam.height,
            fx: cam.fx.as_f64(),
            fy: cam.fy.as_f64(),
            cx: cam.cx.as_f64(),
            cy: cam.cy.as_f64(),
            world_to_camera: cam.world_to_camera.map(|r| r.map(|v| v.as_f64())),
            split,
            znear: Some(cam.znear.as_f64()),
            zfar: Some(cam.zfar.as_f64()),
        }
    }

    pub fn camera<S: Scalar>(&self) -> Result<Camera<S>> {
        Camera::new(
            S::lit(self.fx),
            S::lit(self.fy),
            S::lit(self.cx),
            S::lit(self.cy),
            self.width,
            self.height,
            self.world_to_camera.map(|r| r.map(S::lit)),
            S::lit(self.znear.unwrap_or(0.01)),
            S::lit(self.zfar.unwrap_or(100.0)),
        )
        .map_err(|e| Error::Validation(format!("view {}: {e}", self.name)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraManifest {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<[f64; 3]>,
    pub views: Vec<ManifestView>,
}

impl CameraManifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if m.version != 1 {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                line: 1,
                message: format!("unsupported manifest version {}", m.version),
            });
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetView<S> {
    pub name: String,
    pub camera: Camera<S>,
    pub visible_path: PathBuf,
    pub infrared_path: PathBuf,
    pub split: Split,
}

/// Posed, paired image index of a dataset directory.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetIndex<S> {
    pub root: PathBuf,
    pub views: Vec<DatasetView<S>>,
    pub points: Vec<Vec3<S>>,
}

/// One decoded view; both images are 3-channel.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingView<S> {
    pub name: String,
    pub camera: Camera<S>,
    pub visible: ImageBuffer<S>,
    pub infrared: ImageBuffer<S>,
    pub split: Split,
}

fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if let (true, Some(stem)) = (is_png, path.file_stem()) {
            out.insert(stem.to_string_lossy().into_owned(), path);
        }
    }
    Ok(out)
}

/// Reads `root/cameras.json`, pairs images by basename and checks that every
/// image header matches its camera's dimensions. Views are returned in
/// basename order.
pub fn load_dataset<S: Scalar>(root: &Path) -> Result<DatasetIndex<S>> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!("dataset directory {} does not exist", root.display())));
    }
    let manifest_path = root.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest = CameraManifest::parse(&text, &manifest_path)?;
    let visible = png_stems(&root.join(VISIBLE_DIR))?;
    let infrared = png_stems(&root.join(INFRARED_DIR))?;
    for name in visible.keys() {
        if !infrared.contains_key(name) {
            return Err(Error::Dataset(format!("visible image '{name}' has no infrared twin")));
        }
    }
    for name in infrared.keys() {
        if !visible.contains_key(name) {
            return Err(Error::Dataset(format!("infrared image '{name}' has no visible twin")));
        }
    }
    let mut views = Vec::with_capacity(manifest.views.len());
    for mv in &manifest.views {
        let (Some(v), Some(t)) = (visible.get(&mv.name), infrared.get(&mv.name)) else {
            return Err(Error::Dataset(format!(
                "view '{}' listed in {} has no image pair",
                mv.name,
                manifest_path.display()
            )));
        };
        for p in [v, t] {
            let (w, h) = image::image_dimensions(p).map_err(|e| Error::Decode {
                path: p.clone(),
                message: e.to_string(),
            })?;
            if (w, h) != (mv.width, mv.height) {
                return Err(Error::Validation(format!(
                    "{} is {w}x{h} but view '{}' declares {}x{}",
                    p.display(),
                    mv.name,
                    mv.width,
                    mv.height
                )));
            }
        }
        views.push(DatasetView {
            name: mv.name.clone(),
            camera: mv.camera()?,
            visible_path: v.clone(),
            infrared_path: t.clone(),
            split: mv.split,
        });
    }
    views.sort_by(|a, b| a.name.cmp(&b.name));
    if let Some(w) = views.windows(2).find(|w| w[0].name == w[1].name) {
        return Err(Error::Dataset(format!("view '{}' is listed twice", w[0].name)));
    }
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        views,
        points: manifest.points.iter().map(|p| p.map(S::lit)).collect(),
    })
}

impl<S: Scalar> DatasetIndex<S> {
    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn views_in(&self, split: Option<Split>) -> impl Iterator<Item = &DatasetView<S>> {
        self.views.iter().filter(move |v| split.is_none_or(|s| v.split == s))
    }

    /// Decodes the images of the selected views (all views for `None`).
    pub fn load_views(&self, split: Option<Split>) -> Result<Vec<TrainingView<S>>> {
        let selected: Vec<&DatasetView<S>> = self.views_in(split).collect();
        selected
            .par_iter()
            .map(|v| {
                let (visible, _) = read_image_rgb(&v.visible_path)?;
                let (infrared, _) = read_image_rgb(&v.infrared_path)?;
                Ok(TrainingView {
                    name: v.name.clone(),
                    camera: v.camera.clone(),
                    visible,
                    infrared,
                    split: v.split,
                })
            })
            .collect()
    }
}
