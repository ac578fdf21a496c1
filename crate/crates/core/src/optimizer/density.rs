use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::DensifyConfig;
use crate::geometry::mat3_vec;
use crate::scalar::{sigmoid, Scalar};
use crate::scene::GaussianPrimitive;

/// Accumulated view-space positional gradient norms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradStats<S> {
    pub sum: Vec<S>,
    pub count: Vec<u32>,
}

impl<S: Scalar> GradStats<S> {
    pub fn new(n: usize) -> Self {
        Self {
            sum: vec![S::zero(); n],
            count: vec![0; n],
        }
    }

    /// Adds one observation for primitive `i`.
    pub fn add(&mut self, i: usize, norm: S) {
        self.sum[i] += norm;
        self.count[i] += 1;
    }

    pub fn mean(&self, i: usize) -> S {
        if self.count[i] == 0 {
            S::zero()
        } else {
            self.sum[i] / S::from_u32(self.count[i]).unwrap()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DensifyReport {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 kept away from zero.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn max_scale<S: Scalar>(p: &GaussianPrimitive<S>) -> S {
    p.log_scale.iter().fold(S::neg_infinity(), |a, &b| a.max(b)).exp()
}

/// Clones small high-gradient primitives, splits large high-gradient ones
/// into two samples with scale / 1.6, then prunes everything with opacity
/// below `min_opacity`.
///
/// Returns the new primitive list and, for each new primitive, the index of
/// the original it continues (`None` for freshly created ones).
pub fn densify_and_prune<S: Scalar>(
    prims: &[GaussianPrimitive<S>],
    stats: &GradStats<S>,
    config: &DensifyConfig,
    extent: S,
    rng: &mut ChaCha8Rng,
) -> (Vec<GaussianPrimitive<S>>, Vec<Option<usize>>, DensifyReport) {
    let threshold = S::lit(config.grad_threshold);
    let dense = S::lit(config.percent_dense) * extent;
    let mut out = Vec::with_capacity(prims.len());
    let mut sources = Vec::with_capacity(prims.len());
    let mut fresh = Vec::new();
    let mut report = DensifyReport::default();
    for (i, p) in prims.iter().enumerate() {
        let hot = stats.mean(i) >= threshold;
        let big = max_scale(p) > dense;
        if hot && big {
            let rot = p.rotation.to_rotation().unwrap_or([[S::one(), S::zero(), S::zero()], [S::zero(), S::one(), S::zero()], [S::zero(), S::zero(), S::one()]]);
            let scale = p.log_scale.map(|l| l.exp());
            for _ in 0..2 {
                let z: [S; 3] = std::array::from_fn(|k| S::lit(gauss(rng)) * scale[k]);
                let offset = mat3_vec(&rot, &z);
                let mut child = p.clone();
                for k in 0..3 {
                    child.mean[k] += offset[k];
                    child.log_scale[k] = (scale[k] / S::lit(1.6)).ln();
                }
                fresh.push(child);
            }
            report.split += 1;
            continue;
        }
        out.push(p.clone());
        sources.push(Some(i));
        if hot {
            let mut c = p.clone();
            let sd = S::lit(config.clone_jitter) * max_scale(p);
            for k in 0..3 {
                c.mean[k] += S::lit(gauss(rng)) * sd;
            }
            fresh.push(c);
            report.cloned += 1;
        }
    }
    sources.extend(std::iter::repeat_n(None, fresh.len()));
    out.extend(fresh);
    let min_opacity = S::lit(config.min_opacity);
    let mut kept = Vec::with_capacity(out.len());
    let mut kept_src = Vec::with_capacity(out.len());
    for (p, s) in out.into_iter().zip(sources) {
        if sigmoid(p.opacity_logit) < min_opacity {
            report.pruned += 1;
        } else {
            kept.push(p);
            kept_src.push(s);
        }
    }
    (kept, kept_src, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::logit;
    use crate::scene::Modality;
    use rand::SeedableRng;

    fn prim(scale: f64, opacity: f64, modality: Modality) -> GaussianPrimitive<f64> {
        GaussianPrimitive::isotropic([0.1, 0.2, 0.3], scale, opacity, [0.3, 0.6, 0.9], 1, modality)
    }

    #[test]
    fn quiet_scene_unchanged() {
        let prims = vec![prim(0.01, 0.5, Modality::Visible), prim(0.5, 0.5, Modality::Visible)];
        let stats = GradStats::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, src, report) = densify_and_prune(&prims, &stats, &DensifyConfig::default(), 1.0, &mut rng);
        assert_eq!(out, prims);
        assert_eq!(src, vec![Some(0), Some(1)]);
        assert_eq!(report, DensifyReport::default());
    }

    #[test]
    fn clone_and_split_preserve_tags() {
        let prims = vec![prim(0.005, 0.5, Modality::Infrared), prim(0.5, 0.5, Modality::Infrared)];
        let mut stats = GradStats::new(2);
        stats.add(0, 1.0);
        stats.add(1, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (out, src, report) = densify_and_prune(&prims, &stats, &DensifyConfig::default(), 1.0, &mut rng);
        assert_eq!((report.cloned, report.split), (1, 1));
        assert_eq!(out.len(), 4);
        assert_eq!(src, vec![Some(0), None, None, None]);
        assert!(out.iter().all(|p| p.modality == Modality::Infrared));
        let clone = &out[1];
        assert_eq!(clone.sh, prims[0].sh);
        assert_eq!(clone.log_scale, prims[0].log_scale);
        assert_eq!(clone.opacity_logit, prims[0].opacity_logit);
        assert!((0..3).any(|k| clone.mean[k] != prims[0].mean[k]));
        assert!((0..3).all(|k| (clone.mean[k] - prims[0].mean[k]).abs() < 0.01));
        for child in &out[2..] {
            assert!((child.log_scale[0] - (0.5f64 / 1.6).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn prune_removes_faint() {
        let mut prims = vec![prim(0.1, 0.5, Modality::Visible); 3];
        prims[1].opacity_logit = logit(0.004);
        let stats = GradStats::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (out, src, report) = densify_and_prune(&prims, &stats, &DensifyConfig::default(), 1.0, &mut rng);
        assert_eq!(report.pruned, 1);
        assert_eq!(src, vec![Some(0), Some(2)]);
        assert!(out.iter().all(|p| p.opacity() >= 0.005));
    }
}
