//! Shared fixtures and the brute-force reference renderer.
#![allow(dead_code)]

use fusplat::geometry::{sh_coeff_count, sh_to_color, Camera, Quaternion, SH_C0};
use fusplat::image::ImageBuffer;
use fusplat::rasterizer::{render_fused, render_fused_backward, GradientRequest, RenderSettings};
use fusplat::scene::{GaussianPrimitive, Modality, MultimodalScene};
use fusplat::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pinhole camera at the origin looking down +z with the principal point at
/// the image centre.
pub fn front_camera<S: Scalar>(width: u32, height: u32, focal: f64) -> Camera<S> {
    let (o, z) = (S::one(), S::zero());
    Camera::new(
        S::lit(focal),
        S::lit(focal),
        S::lit(width as f64 / 2.0),
        S::lit(height as f64 / 2.0),
        width,
        height,
        [[o, z, z, z], [z, o, z, z], [z, z, o, z], [z, z, z, o]],
        S::lit(0.01),
        S::lit(100.0),
    )
    .unwrap()
}

/// Primitive whose projected centre lands on pixel `(px, py)` of a
/// [`front_camera`] at depth `z`.
pub fn centered_primitive<S: Scalar>(
    cam: &Camera<S>,
    px: f64,
    py: f64,
    z: f64,
    opacity: f64,
    gray: f64,
    modality: Modality,
) -> GaussianPrimitive<S> {
    let x = (px - cam.cx.as_f64()) * z / cam.fx.as_f64();
    let y = (py - cam.cy.as_f64()) * z / cam.fy.as_f64();
    let mut p = GaussianPrimitive::isotropic(
        [S::lit(x), S::lit(y), S::lit(z)],
        S::lit(0.05 * z),
        S::lit(0.5),
        [S::lit(gray); 3],
        0,
        modality,
    );
    p.opacity_logit = S::lit(logit64(opacity));
    p
}

pub fn logit64(p: f64) -> f64 {
    if p >= 1.0 {
        40.0
    } else {
        (p / (1.0 - p)).ln()
    }
}

/// Random primitive visible from a [`front_camera`] of the given size.
pub fn random_primitive<S: Scalar>(
    rng: &mut ChaCha8Rng,
    width: u32,
    height: u32,
    focal: f64,
    sh_degree: usize,
    modality: Modality,
) -> GaussianPrimitive<S> {
    let z = rng.gen_range(2.0..6.0);
    let u = rng.gen_range(-4.0..width as f64 + 4.0);
    let v = rng.gen_range(-4.0..height as f64 + 4.0);
    let mean = [
        (u - width as f64 / 2.0) * z / focal,
        (v - height as f64 / 2.0) * z / focal,
        z,
    ];
    let pix = z / focal;
    let log_scale = [
        (pix * rng.gen_range(0.7..5.0f64)).ln(),
        (pix * rng.gen_range(0.7..5.0f64)).ln(),
        (pix * rng.gen_range(0.7..5.0f64)).ln(),
    ];
    let q = [
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0f64),
    ];
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
    let mut sh = vec![S::zero(); sh_coeff_count(sh_degree)];
    for ch in 0..3 {
        sh[ch] = S::lit((rng.gen_range(0.2..0.8) - 0.5) / SH_C0);
    }
    for v in sh.iter_mut().skip(3) {
        *v = S::lit(rng.gen_range(-0.05..0.05));
    }
    GaussianPrimitive {
        mean: mean.map(S::lit),
        rotation: Quaternion::new(S::lit(q[0] / n), S::lit(q[1] / n), S::lit(q[2] / n), S::lit(q[3] / n)),
        log_scale: log_scale.map(S::lit),
        opacity_logit: S::lit(logit64(rng.gen_range(0.15..0.95))),
        sh,
        modality,
    }
}

pub fn random_scene<S: Scalar>(
    seed: u64,
    n_visible: usize,
    n_infrared: usize,
    width: u32,
    height: u32,
    focal: f64,
) -> MultimodalScene<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = MultimodalScene::new(1);
    for _ in 0..n_visible {
        scene.visible.push(random_primitive(&mut rng, width, height, focal, 1, Modality::Visible));
    }
    for _ in 0..n_infrared {
        scene.infrared.push(random_primitive(&mut rng, width, height, focal, 1, Modality::Infrared));
    }
    scene
}

pub fn random_tau<S: Scalar>(seed: u64, n: usize) -> Vec<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    (0..n).map(|_| S::lit(rng.gen_range(0.05..1.0))).collect()
}

pub struct NaiveRender<S> {
    pub image: Vec<S>,
    pub transmittance: Vec<S>,
    /// Sum of compositing weights per pixel.
    pub weight_sum: Vec<S>,
}

struct Projected<S> {
    mean: [S; 2],
    conic: [S; 3],
    depth: S,
    color: [S; 3],
    opacity: S,
}

fn project_naive<S: Scalar>(p: &GaussianPrimitive<S>, sh_degree: usize, cam: &Camera<S>) -> Option<Projected<S>> {
    let [qw, qx, qy, qz] = p.rotation.to_array();
    let n = (qw * qw + qx * qx + qy * qy + qz * qz).sqrt();
    let (w, x, y, z) = (qw / n, qx / n, qy / n, qz / n);
    let two = S::lit(2.0);
    let one = S::one();
    let r = [
        [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
        [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
        [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
    ];
    let s2 = p.log_scale.map(|l| (two * l).exp());
    let mut sigma = [[S::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                sigma[i][j] += r[i][k] * r[j][k] * s2[k];
            }
        }
    }
    let m = &cam.world_to_camera;
    let t: Vec<S> = (0..3)
        .map(|i| m[i][0] * p.mean[0] + m[i][1] * p.mean[1] + m[i][2] * p.mean[2] + m[i][3])
        .collect();
    if !(t[2] > cam.znear) || t[2] >= cam.zfar {
        return None;
    }
    let zc = t[2];
    let j = [
        [cam.fx / zc, S::zero(), -cam.fx * t[0] / (zc * zc)],
        [S::zero(), cam.fy / zc, -cam.fy * t[1] / (zc * zc)],
    ];
    let mut jw = [[S::zero(); 3]; 2];
    for a in 0..2 {
        for b in 0..3 {
            for k in 0..3 {
                jw[a][b] += j[a][k] * m[k][b];
            }
        }
    }
    let mut c = [[S::zero(); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            for i in 0..3 {
                for k in 0..3 {
                    c[a][b] += jw[a][i] * sigma[i][k] * jw[b][k];
                }
            }
        }
    }
    let (ca, cb, cc) = (c[0][0] + S::lit(0.3), c[0][1], c[1][1] + S::lit(0.3));
    let det = ca * cc - cb * cb;
    if !(det > S::zero()) {
        return None;
    }
    let eye = [
        -(m[0][0] * m[0][3] + m[1][0] * m[1][3] + m[2][0] * m[2][3]),
        -(m[0][1] * m[0][3] + m[1][1] * m[1][3] + m[2][1] * m[2][3]),
        -(m[0][2] * m[0][3] + m[1][2] * m[1][3] + m[2][2] * m[2][3]),
    ];
    let d = [p.mean[0] - eye[0], p.mean[1] - eye[1], p.mean[2] - eye[2]];
    let dn = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let color = sh_to_color(&p.sh, sh_degree, &[d[0] / dn, d[1] / dn, d[2] / dn]).unwrap();
    Some(Projected {
        mean: [cam.fx * t[0] / zc + cam.cx, cam.fy * t[1] / zc + cam.cy],
        conic: [cc / det, -cb / det, ca / det],
        depth: zc,
        color,
        opacity: one / (one + (-p.opacity_logit).exp()),
    })
}

/// Evaluates the compositing sum independently at every pixel by looping
/// over all primitives, with no tiling or footprint culling.
pub fn naive_render<S: Scalar>(
    prims: &[&GaussianPrimitive<S>],
    sh_degree: usize,
    cam: &Camera<S>,
    tau: Option<&[S]>,
    settings: &RenderSettings<S>,
) -> NaiveRender<S> {
    let mut order: Vec<(usize, Projected<S>)> = prims
        .iter()
        .enumerate()
        .filter_map(|(i, p)| project_naive(p, sh_degree, cam).map(|q| (i, q)))
        .collect();
    order.sort_by(|a, b| a.1.depth.partial_cmp(&b.1.depth).unwrap().then(a.0.cmp(&b.0)));
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut image = vec![S::zero(); w * h * 3];
    let mut transmittance = vec![S::zero(); w * h];
    let mut weight_sum = vec![S::zero(); w * h];
    for py in 0..h {
        for px in 0..w {
            let (fx, fy) = (S::from_usize(px).unwrap(), S::from_usize(py).unwrap());
            let mut t = S::one();
            let mut acc = [S::zero(); 3];
            let mut wsum = S::zero();
            for (i, q) in &order {
                let dx = fx - q.mean[0];
                let dy = fy - q.mean[1];
                let power = -S::lit(0.5) * (q.conic[0] * dx * dx + q.conic[2] * dy * dy) - q.conic[1] * dx * dy;
                let a = tau.map_or(S::one(), |t| t[*i]) * q.opacity * power.exp();
                if a < settings.alpha_cutoff {
                    continue;
                }
                for ch in 0..3 {
                    acc[ch] += q.color[ch] * a * t;
                }
                wsum += a * t;
                t *= S::one() - a;
                if t < settings.min_transmittance {
                    break;
                }
            }
            let p = py * w + px;
            for ch in 0..3 {
                image[p * 3 + ch] = acc[ch] + settings.background[ch] * t;
            }
            transmittance[p] = t;
            weight_sum[p] = wsum;
        }
    }
    NaiveRender {
        image,
        transmittance,
        weight_sum,
    }
}

pub fn max_abs_diff<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x.as_f64() - y.as_f64()).abs()).fold(0.0, f64::max)
}

/// Relative error with a floor that keeps near-zero pairs from dominating.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Small in-memory synthetic fixture: ground truth plus every view decoded
/// as a training view (no quantization).
pub fn synthetic_views<S: Scalar>(
    config: &fusplat::dataio::SyntheticConfig,
) -> (fusplat::dataio::SyntheticScene<S>, Vec<fusplat::dataio::TrainingView<S>>) {
    let gt = fusplat::dataio::synthetic_ground_truth::<S>(config).unwrap();
    let views = (0..gt.cameras.len())
        .map(|i| fusplat::dataio::TrainingView {
            name: gt.names[i].clone(),
            camera: gt.cameras[i].clone(),
            visible: gt.render_visible(i).unwrap(),
            infrared: gt.render_infrared(i).unwrap(),
            split: gt.split_of(i),
        })
        .collect();
    (gt, views)
}

pub fn small_synthetic_config(seed: u64) -> fusplat::dataio::SyntheticConfig {
    fusplat::dataio::SyntheticConfig {
        seed,
        n_views: 6,
        n_gaussians: 12,
        width: 48,
        height: 48,
        focal: 48.0,
        test_every: 0,
        ..Default::default()
    }
}

pub fn weighted_loss(img: &[f64], w: &[f64]) -> f64 {
    img.iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Central differences on every SH coefficient, opacity logit and τ of a
/// 20-primitive 32×32 fused render. Returns (worst relative error, number of
/// steps skipped because the two probes composited different primitive sets).
pub fn fused_fd_check(s: &RenderSettings<f64>, seed: u64) -> (f64, usize) {
    let (w, h, f) = (32u32, 32u32, 30.0);
    let cam = front_camera::<f64>(w, h, f);
    let scene = random_scene::<f64>(seed, 10, 10, w, h, f);
    let tau = random_tau::<f64>(seed, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let weights: Vec<f64> = (0..w * h * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let eval = |sc: &MultimodalScene<f64>, t: &[f64]| {
        let out = render_fused(sc, &cam, t, s).unwrap();
        (weighted_loss(&out.image.data, &weights), out.contributors)
    };
    let out = render_fused(&scene, &cam, &tau, s).unwrap();
    let d = ImageBuffer::from_vec(w as usize, h as usize, 3, weights.clone()).unwrap();
    let g = render_fused_backward(&scene, &cam, &tau, &out, &d, s, GradientRequest::default()).unwrap();
    let eps = 1e-4;
    let d_c = scene.sh_dim();
    let (mut worst, mut skipped) = (0.0f64, 0usize);
    let mut compare = |ana: f64, plus: (f64, Vec<u32>), minus: (f64, Vec<u32>), what: String| {
        if plus.1 != minus.1 {
            skipped += 1;
            return;
        }
        let num = (plus.0 - minus.0) / (2.0 * eps);
        let e = rel_err(ana, num, 1e-3);
        assert!(e <= 1e-4, "{what}: analytic {ana} numeric {num}");
        worst = worst.max(e);
    };
    for k in 0..20 {
        let mut tp = tau.clone();
        tp[k] += eps;
        let mut tm = tau.clone();
        tm[k] -= eps;
        compare(g.d_tau[k], eval(&scene, &tp), eval(&scene, &tm), format!("tau {k}"));
        let edit = |delta: f64, which: usize| {
            let mut sc = scene.clone();
            let n_vis = sc.visible.len();
            let p = if k < n_vis { &mut sc.visible[k] } else { &mut sc.infrared[k - n_vis] };
            if which == d_c {
                p.opacity_logit += delta;
            } else {
                p.sh[which] += delta;
            }
            sc
        };
        for which in 0..=d_c {
            let ana = if which == d_c { g.d_opacity_logit[k] } else { g.d_sh[k * d_c + which] };
            compare(ana, eval(&edit(eps, which), &tau), eval(&edit(-eps, which), &tau), format!("primitive {k} param {which}"));
        }
    }
    (worst, skipped)
}

/// Central differences on every entry of `x`; panics on the first entry
/// whose relative error exceeds `tol`. Returns the worst error.
pub fn fd_check(x: &ImageBuffer<f64>, analytic: &ImageBuffer<f64>, f: impl Fn(&ImageBuffer<f64>) -> f64, eps: f64, tol: f64, floor: f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut p = x.clone();
        p.data[i] += eps;
        let mut m = x.clone();
        m.data[i] -= eps;
        let num = (f(&p) - f(&m)) / (2.0 * eps);
        let ana = analytic.data[i];
        let e = (ana - num).abs() / ana.abs().max(num.abs()).max(floor);
        assert!(e <= tol, "entry {i}: analytic {ana} numeric {num}");
        worst = worst.max(e);
    }
    worst
}

/// Worst relative error of the modulator's parameter and input gradients
/// against central differences, for `L = Σ_r w_r τ_r` over random rows.
pub fn cma_fd_worst(seed: u64) -> (f64, f64) {
    use fusplat::cma::{cma_backward_rows, cma_forward_rows, CmaConfig, CmaParameters};
    let mut p = CmaParameters::<f64>::init(seed, 12, 8, 8, CmaConfig::default()).unwrap();
    // Non-trivial biases and gains so every parameter block matters.
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 4);
    for v in p.b1.iter_mut().chain(p.b2.iter_mut()).chain(p.ln1_bias.iter_mut()).chain(p.ln2_bias.iter_mut()) {
        *v = rng.gen_range(-0.3..0.3);
    }
    for v in p.ln1_gain.iter_mut().chain(p.ln2_gain.iter_mut()) {
        *v = rng.gen_range(0.5..1.5);
    }
    let n = 7;
    let x: Vec<f64> = (0..n * 12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |p: &CmaParameters<f64>, x: &[f64]| -> f64 { cma_forward_rows(p, x).unwrap().iter().zip(&w).map(|(t, w)| t * w).sum() };
    let g = cma_backward_rows(&p, &x, &w, true).unwrap();
    let flat = p.to_flat();
    let grad = g.d_params.to_flat();
    let eps = 1e-6;
    let mut param_worst = 0.0f64;
    for i in 0..flat.len() {
        let mut q = p.clone();
        let mut f = flat.clone();
        f[i] += eps;
        q.set_flat(&f).unwrap();
        let lp = loss(&q, &x);
        f[i] -= 2.0 * eps;
        q.set_flat(&f).unwrap();
        let lm = loss(&q, &x);
        param_worst = param_worst.max(rel_err(grad[i], (lp - lm) / (2.0 * eps), 1e-4));
    }
    let d_sh = g.d_sh.unwrap();
    let mut input_worst = 0.0f64;
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += eps;
        let mut xm = x.clone();
        xm[i] -= eps;
        let num = (loss(&p, &xp) - loss(&p, &xm)) / (2.0 * eps);
        input_worst = input_worst.max(rel_err(d_sh[i], num, 1e-4));
    }
    (param_worst, input_worst)
}
