mod common;

use common::*;
use fusplat::rasterizer::{
    render_fused, render_fused_backward, render_single, render_single_backward, GradientRequest, RenderSettings,
};
use fusplat::scene::{GaussianPrimitive, Modality, MultimodalScene};
use fusplat::image::ImageBuffer;
use fusplat::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn settings() -> RenderSettings<f64> {
    RenderSettings::default()
}

#[test]
fn single_centered_primitive_gives_half() {
    let cam = front_camera::<f64>(32, 32, 32.0);
    let p = centered_primitive(&cam, 16.0, 16.0, 4.0, 0.5, 1.0, Modality::Visible);
    let out = render_single(&[p], 0, &cam, &settings()).unwrap();
    assert!((out.image.get(16, 16, 0) - 0.5).abs() < 1e-12);
    assert!((out.transmittance[16 * 32 + 16] - 0.5).abs() < 1e-12);
    assert_eq!(out.contributors[16 * 32 + 16], 1);
}

#[test]
fn two_stacked_primitives_give_three_quarters() {
    let cam = front_camera::<f64>(32, 32, 32.0);
    let a = centered_primitive(&cam, 16.0, 16.0, 4.0, 0.5, 1.0, Modality::Visible);
    let b = centered_primitive(&cam, 16.0, 16.0, 5.0, 0.5, 1.0, Modality::Visible);
    let out = render_single(&[a, b], 0, &cam, &settings()).unwrap();
    for ch in 0..3 {
        assert!((out.image.get(16, 16, ch) - 0.75).abs() < 1e-12);
    }
}

#[test]
fn fused_two_term_hand_example() {
    let cam = front_camera::<f64>(32, 32, 32.0);
    let mut scene = MultimodalScene::new(0);
    scene.visible.push(centered_primitive(&cam, 16.0, 16.0, 3.0, 0.8, 1.0, Modality::Visible));
    scene.infrared.push(centered_primitive(&cam, 16.0, 16.0, 5.0, 1.0, 0.0, Modality::Infrared));
    let out = render_fused(&scene, &cam, &[0.5, 1.0], &settings()).unwrap();
    assert!((out.image.get(16, 16, 0) - 0.4).abs() < 1e-12);
}

#[test]
fn empty_scene_renders_background() {
    let cam = front_camera::<f64>(20, 10, 20.0);
    let mut s = settings();
    s.background = [0.25, 0.5, 0.75];
    let out = render_single(&[], 1, &cam, &s).unwrap();
    for y in 0..10 {
        for x in 0..20 {
            assert_eq!(out.image.get(x, y, 2), 0.75);
        }
    }
    assert!(out.transmittance.iter().all(|&t| t == 1.0));
}

#[test]
fn tau_length_mismatch_is_shape_error() {
    let cam = front_camera::<f64>(16, 16, 16.0);
    let scene = random_scene::<f64>(1, 3, 2, 16, 16, 16.0);
    assert!(matches!(render_fused(&scene, &cam, &[1.0; 4], &settings()), Err(Error::Shape(_))));
}

#[test]
fn tau_one_equals_concatenated_single_render_bitwise() {
    let cam = front_camera::<f64>(40, 30, 35.0);
    for seed in 0..5 {
        let scene = random_scene::<f64>(seed, 25, 25, 40, 30, 35.0);
        let fused = render_fused(&scene, &cam, &vec![1.0; 50], &settings()).unwrap();
        let concat: Vec<GaussianPrimitive<f64>> = scene.iter_concat().cloned().collect();
        let single = render_single(&concat, 1, &cam, &settings()).unwrap();
        assert_eq!(fused.image.data, single.image.data);
        assert_eq!(fused.transmittance, single.transmittance);
    }
}

#[test]
fn tau_zero_on_infrared_equals_visible_render() {
    let cam = front_camera::<f64>(40, 30, 35.0);
    for seed in 0..5 {
        let scene = random_scene::<f64>(seed + 10, 20, 30, 40, 30, 35.0);
        let mut tau = random_tau::<f64>(seed, 50);
        tau[20..].iter_mut().for_each(|t| *t = 0.0);
        tau[..20].iter_mut().for_each(|t| *t = 1.0);
        let fused = render_fused(&scene, &cam, &tau, &settings()).unwrap();
        let vis = render_single(&scene.visible, 1, &cam, &settings()).unwrap();
        assert!(max_abs_diff(&fused.image.data, &vis.image.data) <= 1e-6);
    }
}

#[test]
fn tiled_render_matches_naive_oracle() {
    let cam = front_camera::<f64>(48, 40, 40.0);
    let s = settings();
    for seed in 0..10 {
        let scene = random_scene::<f64>(seed + 100, 30, 20, 48, 40, 40.0);
        let tau = random_tau::<f64>(seed, 50);
        let fused = render_fused(&scene, &cam, &tau, &s).unwrap();
        let refs: Vec<_> = scene.iter_concat().collect();
        let naive = naive_render(&refs, 1, &cam, Some(&tau), &s);
        assert!(max_abs_diff(&fused.image.data, &naive.image) <= 1e-10, "seed {seed}");
        assert!(max_abs_diff(&fused.transmittance, &naive.transmittance) <= 1e-10);
    }
}

#[test]
fn identical_copies_match_oracle() {
    let cam = front_camera::<f64>(32, 32, 30.0);
    let base = random_scene::<f64>(7, 15, 0, 32, 32, 30.0);
    let mut scene = base.clone();
    scene.infrared = base
        .visible
        .iter()
        .map(|p| GaussianPrimitive {
            modality: Modality::Infrared,
            ..p.clone()
        })
        .collect();
    let fused = render_fused(&scene, &cam, &[1.0; 30], &settings()).unwrap();
    let refs: Vec<_> = scene.iter_concat().collect();
    let naive = naive_render(&refs, 1, &cam, None, &settings());
    assert!(max_abs_diff(&fused.image.data, &naive.image) <= 1e-10);
}

#[test]
fn weights_and_transmittance_partition_unity() {
    let cam = front_camera::<f64>(40, 40, 36.0);
    for seed in 0..8 {
        let mut scene = random_scene::<f64>(seed + 50, 30, 30, 40, 40, 36.0);
        // All colours one: the rendered value equals the weight sum.
        for p in scene.visible.iter_mut().chain(scene.infrared.iter_mut()) {
            p.sh.iter_mut().for_each(|v| *v = 0.0);
            for ch in 0..3 {
                p.sh[ch] = 0.5 / fusplat::geometry::SH_C0;
            }
        }
        let tau = random_tau::<f64>(seed, 60);
        let out = render_fused(&scene, &cam, &tau, &settings()).unwrap();
        for p in 0..40 * 40 {
            let total = out.image.data[p * 3] + out.transmittance[p];
            assert!((total - 1.0).abs() <= 1e-5, "pixel {p}: {total}");
            assert!((0.0..=1.0).contains(&out.transmittance[p]));
        }
    }
}

fn weight_of(scene: &MultimodalScene<f64>, k: usize, tau: &[f64], cam: &fusplat::geometry::Camera<f64>) -> Vec<f64> {
    let mut s = scene.clone();
    let n_vis = s.visible.len();
    for (i, p) in s.visible.iter_mut().chain(s.infrared.iter_mut()).enumerate() {
        p.sh.iter_mut().for_each(|v| *v = 0.0);
        let c = if i == k { 0.5 } else { -0.5 };
        for ch in 0..3 {
            p.sh[ch] = c / fusplat::geometry::SH_C0;
        }
    }
    let _ = n_vis;
    let out = render_fused(&s, cam, tau, &settings()).unwrap();
    out.image.data.iter().step_by(3).copied().collect()
}

#[test]
fn own_weight_monotone_in_tau() {
    let cam = front_camera::<f64>(24, 24, 24.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..6 {
        let scene = random_scene::<f64>(seed + 200, 10, 10, 24, 24, 24.0);
        let tau = random_tau::<f64>(seed, 20);
        let k = rng.gen_range(0..20);
        let before = weight_of(&scene, k, &tau, &cam);
        let mut raised = tau.clone();
        raised[k] = (raised[k] + 0.3).min(1.0);
        let after = weight_of(&scene, k, &raised, &cam);
        for (b, a) in before.iter().zip(&after) {
            assert!(a + 1e-12 >= *b, "weight of {k} decreased: {b} -> {a}");
        }
    }
}

#[test]
fn pixel_values_bounded() {
    let cam = front_camera::<f32>(32, 32, 30.0);
    for seed in 0..10 {
        let scene = random_scene::<f32>(seed + 300, 40, 40, 32, 32, 30.0);
        let tau = random_tau::<f32>(seed, 80);
        let out = render_fused(&scene, &cam, &tau, &RenderSettings::default()).unwrap();
        assert!(out.image.data.iter().all(|&v| (0.0..=1.0 + 1e-6).contains(&v)));
        assert!(out.transmittance.iter().all(|&t| (0.0..=1.0).contains(&t)));
    }
}

#[test]
fn single_primitive_tau_gradient_closed_form() {
    let cam = front_camera::<f64>(32, 32, 32.0);
    let mut scene = MultimodalScene::new(0);
    scene.visible.push(centered_primitive(&cam, 15.3, 16.6, 4.0, 0.7, 0.8, Modality::Visible));
    let tau = [0.6];
    let out = render_fused(&scene, &cam, &tau, &settings()).unwrap();
    // L = red value of pixel (16, 16).
    let mut d = ImageBuffer::new(32, 32, 3);
    d.set(16, 16, 0, 1.0);
    let g = render_fused_backward(&scene, &cam, &tau, &out, &d, &settings(), GradientRequest::default()).unwrap();
    let alpha = 0.7;
    let response = out.image.get(16, 16, 0) / (0.8 * 0.6 * alpha);
    assert!((g.d_tau[0] - 0.8 * alpha * response).abs() < 1e-12);
}

#[test]
fn zero_upstream_gives_exactly_zero_gradients() {
    let cam = front_camera::<f64>(32, 32, 30.0);
    let scene = random_scene::<f64>(9, 10, 10, 32, 32, 30.0);
    let tau = random_tau::<f64>(9, 20);
    let out = render_fused(&scene, &cam, &tau, &settings()).unwrap();
    let d = ImageBuffer::new(32, 32, 3);
    let g = render_fused_backward(&scene, &cam, &tau, &out, &d, &settings(), GradientRequest { geometry: true }).unwrap();
    assert!(g.d_sh.iter().chain(&g.d_opacity_logit).chain(&g.d_tau).all(|&v| v == 0.0));
    let geo = g.geometry.unwrap();
    assert!(geo.d_mean.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn culled_primitive_has_zero_gradient() {
    let cam = front_camera::<f64>(32, 32, 30.0);
    let mut scene = random_scene::<f64>(4, 5, 0, 32, 32, 30.0);
    scene.visible[2].mean[2] = -3.0;
    let tau = vec![0.7; 5];
    let out = render_fused(&scene, &cam, &tau, &settings()).unwrap();
    let d = ImageBuffer::filled(32, 32, 3, 1.0);
    let g = render_fused_backward(&scene, &cam, &tau, &out, &d, &settings(), GradientRequest::default()).unwrap();
    assert_eq!(g.d_tau[2], 0.0);
    assert!(g.d_sh[2 * 12..3 * 12].iter().all(|&v| v == 0.0));
    assert!(!g.touched[2]);
    assert!(g.d_tau.iter().all(|v| v.is_finite()));
}

#[test]
fn backward_rejects_mismatched_inputs() {
    let cam = front_camera::<f64>(32, 32, 30.0);
    let scene = random_scene::<f64>(5, 5, 5, 32, 32, 30.0);
    let tau = random_tau::<f64>(5, 10);
    let out = render_fused(&scene, &cam, &tau, &settings()).unwrap();
    let d = ImageBuffer::filled(32, 32, 3, 1.0);
    let mut other = tau.clone();
    other[3] *= 0.5;
    let r = render_fused_backward(&scene, &cam, &other, &out, &d, &settings(), GradientRequest::default());
    assert!(matches!(r, Err(Error::Contract(_))));
    let small = ImageBuffer::filled(16, 32, 3, 1.0);
    let r = render_fused_backward(&scene, &cam, &tau, &out, &small, &settings(), GradientRequest::default());
    assert!(matches!(r, Err(Error::Contract(_))));
}

#[test]
fn fused_gradients_match_finite_differences_smooth() {
    // Without the alpha cutoff and early stop the render is smooth in every
    // checked parameter, so no probe may be skipped.
    let s = RenderSettings {
        alpha_cutoff: 0.0,
        min_transmittance: 0.0,
        ..settings()
    };
    for seed in [21, 22] {
        let (worst, skipped) = fused_fd_check(&s, seed);
        assert_eq!(skipped, 0);
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }
}

#[test]
fn fused_gradients_match_finite_differences_default_settings() {
    // The 1/255 cutoff makes the image piecewise smooth; probes that straddle
    // a cutoff boundary are not differentiable there and are skipped.
    let (worst, skipped) = fused_fd_check(&settings(), 21);
    assert!(worst <= 1e-4, "worst relative error {worst}");
    assert!(skipped * 10 <= 20 * 14, "{skipped} probes straddled a cutoff");
}

#[test]
fn geometry_gradients_match_finite_differences() {
    let (w, h, f) = (24u32, 24u32, 24.0);
    let cam = front_camera::<f64>(w, h, f);
    let scene = random_scene::<f64>(31, 8, 0, w, h, f);
    // Zero view-dependent terms: the backward pass treats the view direction
    // as a constant, so colour must not depend on the mean here.
    let mut prims = scene.visible.clone();
    for p in prims.iter_mut() {
        p.sh[3..].iter_mut().for_each(|v| *v = 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let weights: Vec<f64> = (0..w * h * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // No cutoff or early stop: the loss is then smooth in the geometry.
    let s = RenderSettings {
        alpha_cutoff: 0.0,
        min_transmittance: 0.0,
        ..settings()
    };
    let loss = |ps: &[GaussianPrimitive<f64>]| weighted_loss(&render_single(ps, 1, &cam, &s).unwrap().image.data, &weights);
    let out = render_single(&prims, 1, &cam, &s).unwrap();
    let d = ImageBuffer::from_vec(w as usize, h as usize, 3, weights.clone()).unwrap();
    let g = render_single_backward(&prims, 1, &cam, &out, &d, &s, GradientRequest { geometry: true }).unwrap();
    let geo = g.geometry.unwrap();
    let eps = 1e-5;
    for k in 0..prims.len() {
        for axis in 0..3 {
            let fd = |edit: &dyn Fn(&mut GaussianPrimitive<f64>, f64)| {
                let mut p = prims.clone();
                edit(&mut p[k], eps);
                let mut m = prims.clone();
                edit(&mut m[k], -eps);
                (loss(&p) - loss(&m)) / (2.0 * eps)
            };
            let num = fd(&|p, d| p.mean[axis] += d);
            assert!(rel_err(geo.d_mean[k][axis], num, 1e-3) <= 1e-4, "mean {k}/{axis}: {} vs {num}", geo.d_mean[k][axis]);
            let num = fd(&|p, d| p.log_scale[axis] += d);
            assert!(rel_err(geo.d_log_scale[k][axis], num, 1e-3) <= 1e-4, "scale {k}/{axis}");
        }
        for c in 0..4 {
            let num = {
                let bump = |d: f64| {
                    let mut p = prims.clone();
                    let mut q = p[k].rotation.to_array();
                    q[c] += d;
                    p[k].rotation = fusplat::geometry::Quaternion::from_array(q);
                    loss(&p)
                };
                (bump(eps) - bump(-eps)) / (2.0 * eps)
            };
            assert!(rel_err(geo.d_rotation[k][c], num, 1e-3) <= 1e-4, "rotation {k}/{c}");
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let cam = front_camera::<f32>(64, 48, 50.0);
    let scene = random_scene::<f32>(12, 60, 60, 64, 48, 50.0);
    let tau = random_tau::<f32>(12, 120);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let out = render_fused(&scene, &cam, &tau, &RenderSettings::default()).unwrap();
            let d = ImageBuffer::filled(64, 48, 3, 0.5f32);
            let g = render_fused_backward(&scene, &cam, &tau, &out, &d, &RenderSettings::default(), GradientRequest::default())
                .unwrap();
            (out.image.data, g.d_tau, g.d_sh)
        })
    };
    let one = run(1);
    assert_eq!(one, run(1));
    for threads in [2, 3, 5] {
        let other = run(threads);
        assert!(max_abs_diff(&one.0, &other.0) <= 1e-6);
        assert!(max_abs_diff(&one.1, &other.1) <= 1e-6);
        assert!(max_abs_diff(&one.2, &other.2) <= 1e-6);
    }
}
