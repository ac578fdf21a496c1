//! Gaussian primitives and the two-modality scene container.

mod ply;

pub use ply::{load_scene, load_scene_expecting, save_scene, scene_to_ply_bytes, scene_from_ply_bytes};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    build_covariance, normalize3, sh_coeff_count, sh_to_color, sub3, Camera, Covariance3, Quaternion, Vec3,
    SH_C0,
};
use crate::scalar::{logit, sigmoid, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    Visible,
    Infrared,
}

impl Modality {
    pub fn as_byte(self) -> u8 {
        match self {
            Modality::Visible => 0,
            Modality::Infrared => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Modality::Visible),
            1 => Some(Modality::Infrared),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrimitive<S> {
    pub mean: Vec3<S>,
    pub rotation: Quaternion<S>,
    pub log_scale: Vec3<S>,
    pub opacity_logit: S,
    /// Basis-major SH coefficients, `sh[k * 3 + channel]`.
    pub sh: Vec<S>,
    pub modality: Modality,
}

impl<S: Scalar> GaussianPrimitive<S> {
    pub fn opacity(&self) -> S {
        sigmoid(self.opacity_logit)
    }

    pub fn covariance(&self) -> Result<Covariance3<S>> {
        build_covariance(&self.rotation, &self.log_scale)
    }

    /// View-dependent colour as seen from `cam`.
    pub fn color(&self, sh_degree: usize, cam: &Camera<S>) -> Result<[S; 3]> {
        let dir = normalize3(&sub3(&self.mean, &cam.center()));
        sh_to_color(&self.sh, sh_degree, &dir)
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().chain(&self.log_scale).chain(&self.sh).all(|v| v.is_finite())
            && self.rotation.is_finite()
            && self.opacity_logit.is_finite()
    }

    /// Isotropic primitive whose view-independent colour is `rgb`.
    pub fn isotropic(mean: Vec3<S>, scale: S, opacity: S, rgb: [S; 3], sh_degree: usize, modality: Modality) -> Self {
        let mut sh = vec![S::zero(); sh_coeff_count(sh_degree)];
        let c0 = S::lit(SH_C0);
        for ch in 0..3 {
            sh[ch] = (rgb[ch] - S::lit(0.5)) / c0;
        }
        Self {
            mean,
            rotation: Quaternion::identity(),
            log_scale: [scale.ln(); 3],
            opacity_logit: logit(opacity),
            sh,
            modality,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultimodalScene<S> {
    pub visible: Vec<GaussianPrimitive<S>>,
    pub infrared: Vec<GaussianPrimitive<S>>,
    pub sh_degree: usize,
}

impl<S: Scalar> MultimodalScene<S> {
    pub fn new(sh_degree: usize) -> Self {
        Self {
            visible: Vec::new(),
            infrared: Vec::new(),
            sh_degree,
        }
    }

    pub fn sh_dim(&self) -> usize {
        sh_coeff_count(self.sh_degree)
    }

    /// `(N, M)` = (visible, infrared) counts.
    pub fn counts(&self) -> (usize, usize) {
        (self.visible.len(), self.infrared.len())
    }

    pub fn len(&self) -> usize {
        self.visible.len() + self.infrared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn modality(&self, m: Modality) -> &[GaussianPrimitive<S>] {
        match m {
            Modality::Visible => &self.visible,
            Modality::Infrared => &self.infrared,
        }
    }

    pub fn modality_mut(&mut self, m: Modality) -> &mut Vec<GaussianPrimitive<S>> {
        match m {
            Modality::Visible => &mut self.visible,
            Modality::Infrared => &mut self.infrared,
        }
    }

    /// Checks tags, coefficient counts and finiteness.
    pub fn validate(&self) -> Result<()> {
        let d_c = self.sh_dim();
        for (idx, p) in self.concat_modalities() {
            let expected = if idx < self.visible.len() {
                Modality::Visible
            } else {
                Modality::Infrared
            };
            if p.modality != expected {
                return Err(Error::Validation(format!(
                    "primitive {idx} tagged {:?} but stored in the {:?} partition",
                    p.modality, expected
                )));
            }
            if p.sh.len() != d_c {
                return Err(Error::Shape(format!(
                    "primitive {idx} has {} SH coefficients, scene expects {d_c}",
                    p.sh.len()
                )));
            }
            if !p.is_finite() {
                return Err(Error::Validation(format!("primitive {idx} has non-finite fields")));
            }
        }
        Ok(())
    }

    /// All primitives in the global order used by fused rendering and the
    /// modulator: visible first, then infrared.
    pub fn concat_modalities(&self) -> Vec<(usize, &GaussianPrimitive<S>)> {
        self.visible.iter().chain(self.infrared.iter()).enumerate().collect()
    }

    pub fn iter_concat(&self) -> impl Iterator<Item = &GaussianPrimitive<S>> {
        self.visible.iter().chain(self.infrared.iter())
    }

    /// Inverse of [`concat_modalities`](Self::concat_modalities): rebuilds the
    /// partition from a concatenated list ordered visible-then-infrared.
    pub fn from_concatenated(prims: Vec<GaussianPrimitive<S>>, sh_degree: usize) -> Result<Self> {
        let mut scene = Self::new(sh_degree);
        let mut seen_infrared = false;
        for (i, p) in prims.into_iter().enumerate() {
            match p.modality {
                Modality::Visible if seen_infrared => {
                    return Err(Error::Validation(format!(
                        "visible primitive at index {i} follows infrared primitives"
                    )))
                }
                Modality::Visible => scene.visible.push(p),
                Modality::Infrared => {
                    seen_infrared = true;
                    scene.infrared.push(p)
                }
            }
        }
        scene.validate()?;
        Ok(scene)
    }

    /// Stage-1 balance `γ = M / (N + M)`.
    pub fn gaussian_count_ratio(&self) -> Result<S> {
        let (n, m) = self.counts();
        if n + m == 0 {
            return Err(Error::UndefinedRatio);
        }
        Ok(S::from_usize(m).unwrap() / S::from_usize(n + m).unwrap())
    }

    /// Builds both modalities from one shared point cloud. Each primitive is
    /// isotropic with scale equal to the mean distance to its three nearest
    /// neighbours, opacity 0.1 and a flat colour per modality.
    pub fn from_shared_points(
        points: &[Vec3<S>],
        sh_degree: usize,
        visible_rgb: [S; 3],
        infrared_rgb: [S; 3],
    ) -> Self {
        let scales = knn_mean_distance(points, 3);
        let opacity = S::lit(0.1);
        let mut scene = Self::new(sh_degree);
        for (p, &s) in points.iter().zip(&scales) {
            scene.visible.push(GaussianPrimitive::isotropic(*p, s, opacity, visible_rgb, sh_degree, Modality::Visible));
            scene
                .infrared
                .push(GaussianPrimitive::isotropic(*p, s, opacity, infrared_rgb, sh_degree, Modality::Infrared));
        }
        scene
    }
}

/// Mean distance from each point to its `k` nearest neighbours (brute force).
pub fn knn_mean_distance<S: Scalar>(points: &[Vec3<S>], k: usize) -> Vec<S> {
    let fallback = S::lit(0.01);
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<S> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| {
                    let v = sub3(p, q);
                    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
                })
                .collect();
            if d.is_empty() {
                return fallback;
            }
            d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let take = k.min(d.len());
            let m = d[..take].iter().copied().sum::<S>() / S::from_usize(take).unwrap();
            if m > S::zero() {
                m
            } else {
                fallback
            }
        })
        .collect()
}
