mod common;

use common::fd_check;
use fusplat::image::ImageBuffer;
use fusplat::losses::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(w: usize, h: usize, c: usize, seed: u64) -> ImageBuffer<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageBuffer::from_vec(w, h, c, (0..w * h * c).map(|_| rng.gen_range(0.02..0.98)).collect()).unwrap()
}

/// SSIM evaluated window by window with explicit zero padding.
fn ssim_bruteforce(a: &ImageBuffer<f64>, b: &ImageBuffer<f64>) -> f64 {
    let r = 5isize;
    let mut k = [[0.0; 11]; 11];
    let mut sum = 0.0;
    for (j, row) in k.iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            let (dx, dy) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
            sum += *v;
        }
    }
    let (c1, c2) = (1e-4, 9e-4);
    let mut total = 0.0;
    for ch in 0..a.channels {
        for y in 0..a.height as isize {
            for x in 0..a.width as isize {
                let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (sx, sy) = (x + dx, y + dy);
                        if sx < 0 || sy < 0 || sx >= a.width as isize || sy >= a.height as isize {
                            continue;
                        }
                        let wgt = k[(dy + r) as usize][(dx + r) as usize] / sum;
                        let va = a.get(sx as usize, sy as usize, ch);
                        let vb = b.get(sx as usize, sy as usize, ch);
                        ma += wgt * va;
                        mb += wgt * vb;
                        aa += wgt * va * va;
                        bb += wgt * vb * vb;
                        ab += wgt * va * vb;
                    }
                }
                let (va, vb, cov) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
                total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
    }
    total / (a.len() as f64)
}

#[test]
fn ssim_matches_bruteforce_window_oracle() {
    for seed in 0..3 {
        let a = random(17, 13, 3, seed);
        let b = random(17, 13, 3, seed + 10);
        let fast = ssim_value(&a, &b).unwrap();
        assert!((fast - ssim_bruteforce(&a, &b)).abs() < 1e-12);
    }
}

#[test]
fn l1_gradient_matches_fd() {
    let a = random(16, 16, 3, 1);
    let b = random(16, 16, 3, 2);
    let g = l1_loss(&a, &b).unwrap().d_image;
    fd_check(&a, &g, |x| l1_loss(x, &b).unwrap().value, 1e-7, 1e-6, 1e-9);
}

#[test]
fn ssim_gradient_matches_fd() {
    let a = random(16, 16, 3, 3);
    let b = random(16, 16, 3, 4);
    let (_, g) = ssim(&a, &b).unwrap();
    fd_check(&a, &g, |x| ssim_value(x, &b).unwrap(), 1e-5, 1e-4, 1e-7);
}

#[test]
fn gradient_loss_matches_fd() {
    let f = random(16, 16, 3, 5);
    let targets = FusionTargets::new(random(16, 16, 3, 6), random(16, 16, 1, 7)).unwrap();
    let g = fusion_gradient_loss(&f, &targets).unwrap().d_image;
    fd_check(&f, &g, |x| fusion_gradient_loss(x, &targets).unwrap().value, 1e-5, 1e-5, 1e-5);
}

#[test]
fn intensity_and_stage2_match_fd() {
    let f = random(16, 16, 3, 8);
    let targets = FusionTargets::new(random(16, 16, 3, 9), random(16, 16, 1, 10)).unwrap();
    let g = fusion_intensity_loss(&f, &targets, 1.0, 2.0).unwrap().d_image;
    fd_check(&f, &g, |x| fusion_intensity_loss(x, &targets, 1.0, 2.0).unwrap().value, 1e-6, 1e-4, 1e-7);
    let g = stage2_loss(&f, &targets, 1.0, 2.0).unwrap().d_image;
    fd_check(&f, &g, |x| stage2_loss(x, &targets, 1.0, 2.0).unwrap().value, 1e-6, 1e-4, 1e-7);
}

#[test]
fn stage1_matches_fd_and_composition() {
    let (v, vr, t, tr) = (random(16, 16, 3, 11), random(16, 16, 3, 12), random(16, 16, 3, 13), random(16, 16, 3, 14));
    let gamma = 0.37;
    let l = stage1_loss(&v, &vr, &t, &tr, gamma).unwrap();
    let by_hand = gamma * (l1_loss(&vr, &v).unwrap().value + 1.0 - ssim_value(&v, &vr).unwrap())
        + (1.0 - gamma) * (l1_loss(&tr, &t).unwrap().value + 1.0 - ssim_value(&t, &tr).unwrap());
    assert!((l.value - by_hand).abs() <= 1e-9);
    fd_check(&vr, &l.d_visible_render, |x| stage1_loss(&v, x, &t, &tr, gamma).unwrap().value, 1e-6, 1e-4, 1e-7);
    fd_check(&tr, &l.d_infrared_render, |x| stage1_loss(&v, &vr, &t, x, gamma).unwrap().value, 1e-6, 1e-4, 1e-7);
}

#[test]
fn intensity_without_ssim_is_l1_against_max() {
    let f = random(16, 16, 3, 15);
    let targets = FusionTargets::new(random(16, 16, 3, 16), random(16, 16, 1, 17)).unwrap();
    let a = fusion_intensity_loss(&f, &targets, 1.0, 0.0).unwrap();
    let b = l1_loss(&f, &targets.max_vt).unwrap();
    assert_eq!(a, b);
}

#[test]
fn stage2_is_sum_of_parts() {
    let f = random(16, 16, 3, 18);
    let targets = FusionTargets::new(random(16, 16, 3, 19), random(16, 16, 1, 20)).unwrap();
    let total = stage2_loss(&f, &targets, 1.0, 2.0).unwrap().value;
    let parts = fusion_intensity_loss(&f, &targets, 1.0, 2.0).unwrap().value + fusion_gradient_loss(&f, &targets).unwrap().value;
    assert!((total - parts).abs() <= 1e-12);
}

#[test]
fn fusion_losses_symmetric_in_sources() {
    let f = random(16, 16, 3, 21);
    let v = random(16, 16, 3, 22);
    let t = random(16, 16, 3, 23);
    let a = FusionTargets::new(v.clone(), t.clone()).unwrap();
    let b = FusionTargets::new(t, v).unwrap();
    assert_eq!(stage2_loss(&f, &a, 1.0, 2.0).unwrap(), stage2_loss(&f, &b, 1.0, 2.0).unwrap());
}

#[test]
fn mismatched_dims_are_errors() {
    let a = random(16, 16, 3, 1);
    let b = random(16, 15, 3, 1);
    assert!(l1_loss(&a, &b).is_err());
    assert!(ssim_value(&a, &b).is_err());
    assert!(FusionTargets::new(a.clone(), b.clone()).is_err());
    let targets = FusionTargets::new(a.clone(), a.clone()).unwrap();
    assert!(stage2_loss(&b, &targets, 1.0, 2.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn losses_nonnegative_and_finite(seed in 0u64..10_000, l1w in 0.0f64..3.0, l2w in 0.0f64..3.0) {
        let f = random(16, 16, 3, seed);
        let targets = FusionTargets::new(random(16, 16, 3, seed + 1), random(16, 16, 1, seed + 2)).unwrap();
        let s = ssim_value(&f, &targets.visible).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        for l in [
            l1_loss(&f, &targets.visible).unwrap(),
            fusion_intensity_loss(&f, &targets, l1w, l2w).unwrap(),
            fusion_gradient_loss(&f, &targets).unwrap(),
            stage2_loss(&f, &targets, l1w, l2w).unwrap(),
        ] {
            prop_assert!(l.value >= 0.0 && l.value.is_finite());
            prop_assert!(l.d_image.data.iter().all(|v| v.is_finite()));
        }
        let d = 1.0 - s;
        prop_assert!((0.0..=2.0).contains(&d));
    }
}
