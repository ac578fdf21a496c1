use rayon::prelude::*;

use super::tiles::{Splat, TileBins};
use super::{GradientRequest, RenderSettings};
use crate::error::Result;
use crate::geometry::{conic_backward, normalize3, project_gaussian_backward, sh_backward, sh_coeff_count, sub3, Camera};
use crate::image::ImageBuffer;
use crate::scalar::Scalar;
use crate::scene::GaussianPrimitive;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput<S> {
    /// `H × W × 3` composite over the background.
    pub image: ImageBuffer<S>,
    /// Final transmittance per pixel, row-major.
    pub transmittance: Vec<S>,
    /// Number of primitives that contributed to each pixel.
    pub contributors: Vec<u32>,
    /// Per pixel, the tile-list position one past the last contributor.
    pub(crate) stop: Vec<u32>,
    pub(crate) fingerprint: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GeometryGradients<S> {
    pub d_mean: Vec<[S; 3]>,
    pub d_rotation: Vec<[S; 4]>,
    pub d_log_scale: Vec<[S; 3]>,
    /// Screen-space mean gradient (pixels), used for densification statistics.
    pub d_mean2d: Vec<[S; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplatGradients<S> {
    /// Flattened `n × d_c`, same layout as the primitives' SH vectors.
    pub d_sh: Vec<S>,
    pub d_opacity_logit: Vec<S>,
    /// Gradient w.r.t. the modulation weights (zeros for unmodulated renders).
    pub d_tau: Vec<S>,
    /// Whether each primitive was binned to at least one tile.
    pub touched: Vec<bool>,
    pub geometry: Option<GeometryGradients<S>>,
}

#[inline]
fn gaussian_power<S: Scalar>(s: &Splat<S>, px: S, py: S) -> (S, S, S) {
    let dx = px - s.mean2d[0];
    let dy = py - s.mean2d[1];
    let half = S::lit(0.5);
    let power = -half * (s.conic[0] * dx * dx + s.conic[2] * dy * dy) - s.conic[1] * dx * dy;
    (power, dx, dy)
}

struct TileForward<S> {
    color: Vec<[S; 3]>,
    trans: Vec<S>,
    count: Vec<u32>,
    stop: Vec<u32>,
}

pub(super) fn forward<S: Scalar>(
    splats: &[Option<Splat<S>>],
    effective: &[S],
    bins: &TileBins,
    cam: &Camera<S>,
    settings: &RenderSettings<S>,
    fingerprint: u64,
) -> RenderOutput<S> {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let tiles: Vec<TileForward<S>> = (0..bins.lists.len())
        .into_par_iter()
        .map(|t| {
            let (x0, y0, x1, y1) = bins.tile_pixels(t, w, h);
            let list = &bins.lists[t];
            let n = (x1 - x0) * (y1 - y0);
            let mut out = TileForward {
                color: Vec::with_capacity(n),
                trans: Vec::with_capacity(n),
                count: Vec::with_capacity(n),
                stop: Vec::with_capacity(n),
            };
            for y in y0..y1 {
                for x in x0..x1 {
                    let (px, py) = (S::from_usize(x).unwrap(), S::from_usize(y).unwrap());
                    let mut trans = S::one();
                    let mut c = [S::zero(); 3];
                    let mut count = 0u32;
                    let mut stop = 0u32;
                    for (pos, &idx) in list.iter().enumerate() {
                        let s = splats[idx as usize].as_ref().unwrap();
                        let (power, _, _) = gaussian_power(s, px, py);
                        let a = effective[idx as usize] * power.exp();
                        if a < settings.alpha_cutoff {
                            continue;
                        }
                        let wgt = a * trans;
                        for ch in 0..3 {
                            c[ch] += s.color[ch] * wgt;
                        }
                        trans *= S::one() - a;
                        count += 1;
                        stop = pos as u32 + 1;
                        if trans < settings.min_transmittance {
                            break;
                        }
                    }
                    for ch in 0..3 {
                        c[ch] += settings.background[ch] * trans;
                    }
                    out.color.push(c);
                    out.trans.push(trans);
                    out.count.push(count);
                    out.stop.push(stop);
                }
            }
            out
        })
        .collect();

    let mut image = ImageBuffer::new(w, h, 3);
    let mut transmittance = vec![S::one(); w * h];
    let mut contributors = vec![0u32; w * h];
    let mut stop = vec![0u32; w * h];
    for (t, tile) in tiles.iter().enumerate() {
        let (x0, y0, x1, y1) = bins.tile_pixels(t, w, h);
        let mut k = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                let p = y * w + x;
                image.data[p * 3..p * 3 + 3].copy_from_slice(&tile.color[k]);
                transmittance[p] = tile.trans[k];
                contributors[p] = tile.count[k];
                stop[p] = tile.stop[k];
                k += 1;
            }
        }
    }
    RenderOutput {
        image,
        transmittance,
        contributors,
        stop,
        fingerprint,
    }
}

#[derive(Clone, Copy, Default)]
struct LocalGrad<S> {
    color: [S; 3],
    alpha: S,
    tau: S,
    mean2d: [S; 2],
    conic: [S; 3],
}

impl<S: Scalar> LocalGrad<S> {
    fn add(&mut self, o: &Self) {
        for ch in 0..3 {
            self.color[ch] += o.color[ch];
            self.conic[ch] += o.conic[ch];
        }
        self.alpha += o.alpha;
        self.tau += o.tau;
        self.mean2d[0] += o.mean2d[0];
        self.mean2d[1] += o.mean2d[1];
    }
}

struct Contribution<S> {
    pos: usize,
    idx: usize,
    a: S,
    g: S,
    trans: S,
    dx: S,
    dy: S,
}

#[allow(clippy::too_many_arguments)]
pub(super) fn backward<S: Scalar>(
    prims: &[&GaussianPrimitive<S>],
    sh_degree: usize,
    cam: &Camera<S>,
    tau: Option<&[S]>,
    splats: &[Option<Splat<S>>],
    effective: &[S],
    bins: &TileBins,
    forward: &RenderOutput<S>,
    d_image: &ImageBuffer<S>,
    settings: &RenderSettings<S>,
    request: GradientRequest,
) -> Result<SplatGradients<S>> {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let zero = S::zero();
    let one = S::one();
    let half = S::lit(0.5);

    let partials: Vec<Vec<LocalGrad<S>>> = (0..bins.lists.len())
        .into_par_iter()
        .map(|t| {
            let (x0, y0, x1, y1) = bins.tile_pixels(t, w, h);
            let list = &bins.lists[t];
            let mut local = vec![LocalGrad::<S>::default(); list.len()];
            let mut chain: Vec<Contribution<S>> = Vec::new();
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = y * w + x;
                    let d = [d_image.data[p * 3], d_image.data[p * 3 + 1], d_image.data[p * 3 + 2]];
                    if d.iter().all(|v| *v == zero) {
                        continue;
                    }
                    let (px, py) = (S::from_usize(x).unwrap(), S::from_usize(y).unwrap());
                    chain.clear();
                    let mut trans = one;
                    for (pos, &idx) in list.iter().enumerate().take(forward.stop[p] as usize) {
                        let s = splats[idx as usize].as_ref().unwrap();
                        let (power, dx, dy) = gaussian_power(s, px, py);
                        let g = power.exp();
                        let a = effective[idx as usize] * g;
                        if a < settings.alpha_cutoff {
                            continue;
                        }
                        chain.push(Contribution {
                            pos,
                            idx: idx as usize,
                            a,
                            g,
                            trans,
                            dx,
                            dy,
                        });
                        trans *= one - a;
                    }
                    // colour of everything behind the current contributor, normalised
                    // by the transmittance in front of it
                    let mut behind = settings.background;
                    for c in chain.iter().rev() {
                        let s = splats[c.idx].as_ref().unwrap();
                        let lg = &mut local[c.pos];
                        let mut d_a = zero;
                        for ch in 0..3 {
                            lg.color[ch] += d[ch] * c.a * c.trans;
                            d_a += (s.color[ch] - behind[ch]) * d[ch];
                            behind[ch] = s.color[ch] * c.a + (one - c.a) * behind[ch];
                        }
                        d_a *= c.trans;
                        let t_k = tau.map_or(one, |t| t[c.idx]);
                        lg.alpha += d_a * t_k * c.g;
                        lg.tau += d_a * s.opacity * c.g;
                        let d_power = d_a * effective[c.idx] * c.g;
                        if request.geometry {
                            lg.conic[0] += -half * c.dx * c.dx * d_power;
                            lg.conic[1] += -c.dx * c.dy * d_power;
                            lg.conic[2] += -half * c.dy * c.dy * d_power;
                            lg.mean2d[0] += (s.conic[0] * c.dx + s.conic[1] * c.dy) * d_power;
                            lg.mean2d[1] += (s.conic[1] * c.dx + s.conic[2] * c.dy) * d_power;
                        }
                    }
                }
            }
            local
        })
        .collect();

    let n = prims.len();
    let mut acc = vec![LocalGrad::<S>::default(); n];
    let mut touched = vec![false; n];
    for (t, local) in partials.iter().enumerate() {
        for (pos, &idx) in bins.lists[t].iter().enumerate() {
            acc[idx as usize].add(&local[pos]);
            touched[idx as usize] = true;
        }
    }

    let d_c = sh_coeff_count(sh_degree);
    let mut d_sh = vec![zero; n * d_c];
    let mut d_opacity_logit = vec![zero; n];
    let mut d_tau = vec![zero; n];
    let mut geometry = request.geometry.then(|| GeometryGradients {
        d_mean: vec![[zero; 3]; n],
        d_rotation: vec![[zero; 4]; n],
        d_log_scale: vec![[zero; 3]; n],
        d_mean2d: vec![[zero; 2]; n],
    });
    let center = cam.center();
    for i in 0..n {
        let Some(s) = splats[i].as_ref() else { continue };
        if !touched[i] {
            continue;
        }
        let g = &acc[i];
        let p = prims[i];
        let dir = normalize3(&sub3(&p.mean, &center));
        sh_backward(sh_degree, &dir, &s.color, &g.color, &mut d_sh[i * d_c..(i + 1) * d_c]);
        d_opacity_logit[i] = g.alpha * s.opacity * (one - s.opacity);
        if tau.is_some() {
            d_tau[i] = g.tau;
        }
        if let Some(geo) = geometry.as_mut() {
            let d_cov2d = conic_backward(&s.cov2d, &g.conic);
            let pg = project_gaussian_backward(&p.mean, &p.rotation, &p.log_scale, cam, &g.mean2d, &d_cov2d)?;
            geo.d_mean[i] = pg.d_mean;
            geo.d_rotation[i] = pg.d_rotation;
            geo.d_log_scale[i] = pg.d_log_scale;
            geo.d_mean2d[i] = g.mean2d;
        }
    }
    Ok(SplatGradients {
        d_sh,
        d_opacity_logit,
        d_tau,
        touched,
        geometry,
    })
}
