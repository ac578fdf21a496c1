use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::scalar::Scalar;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn kernel<S: Scalar>() -> [S; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    std::array::from_fn(|i| S::lit(raw[i] / sum))
}

/// Same-size separable Gaussian filter of one plane with zero padding.
/// The kernel is symmetric, so this operator is its own adjoint.
fn blur<S: Scalar>(plane: &[S], w: usize, h: usize, k: &[S; SSIM_WINDOW]) -> Vec<S> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![S::zero(); w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = S::zero();
            for (i, &kv) in k.iter().enumerate() {
                let sx = x as isize + i as isize - r;
                if sx >= 0 && (sx as usize) < w {
                    acc += kv * row[sx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![S::zero(); w * h];
    for y in 0..h {
        for (i, &kv) in k.iter().enumerate() {
            let sy = y as isize + i as isize - r;
            if sy < 0 || sy as usize >= h {
                continue;
            }
            let src = &tmp[sy as usize * w..(sy as usize + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for x in 0..w {
                dst[x] += kv * src[x];
            }
        }
    }
    out
}

fn plane<S: Scalar>(img: &ImageBuffer<S>, c: usize) -> Vec<S> {
    img.data.iter().skip(c).step_by(img.channels).copied().collect()
}

fn check<S: Scalar>(a: &ImageBuffer<S>, b: &ImageBuffer<S>) -> Result<()> {
    a.ensure_same_dims(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.width, a.height
        )));
    }
    Ok(())
}

/// Per-channel SSIM sum and (optionally) its gradient plane with respect to `a`.
fn channel<S: Scalar>(a: &[S], b: &[S], w: usize, h: usize, scale: S, want_grad: bool) -> (S, Vec<S>) {
    let k = kernel::<S>();
    let c1 = S::lit(SSIM_C1);
    let c2 = S::lit(SSIM_C2);
    let two = S::lit(2.0);
    let mu_a = blur(a, w, h, &k);
    let mu_b = blur(b, w, h, &k);
    let sq = |x: &[S], y: &[S]| x.iter().zip(y).map(|(&p, &q)| p * q).collect::<Vec<S>>();
    let e_aa = blur(&sq(a, a), w, h, &k);
    let e_bb = blur(&sq(b, b), w, h, &k);
    let e_ab = blur(&sq(a, b), w, h, &k);
    let n = w * h;
    let mut total = S::zero();
    let (mut g_mu, mut g_aa, mut g_ab) = if want_grad {
        (vec![S::zero(); n], vec![S::zero(); n], vec![S::zero(); n])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for p in 0..n {
        let (ma, mb) = (mu_a[p], mu_b[p]);
        let var_a = e_aa[p] - ma * ma;
        let var_b = e_bb[p] - mb * mb;
        let cov = e_ab[p] - ma * mb;
        let n1 = two * ma * mb + c1;
        let n2 = two * cov + c2;
        let d1 = ma * ma + mb * mb + c1;
        let d2 = var_a + var_b + c2;
        let s = n1 * n2 / (d1 * d2);
        total += s;
        if want_grad {
            let gs = scale * s;
            g_mu[p] = gs * (two * mb / n1 - two * mb / n2 - two * ma / d1 + two * ma / d2);
            g_aa[p] = -gs / d2;
            g_ab[p] = gs * two / n2;
        }
    }
    if !want_grad {
        return (total, Vec::new());
    }
    let b_mu = blur(&g_mu, w, h, &k);
    let b_aa = blur(&g_aa, w, h, &k);
    let b_ab = blur(&g_ab, w, h, &k);
    let grad = (0..n).map(|q| b_mu[q] + two * a[q] * b_aa[q] + b[q] * b_ab[q]).collect();
    (total, grad)
}

fn ssim_impl<S: Scalar>(a: &ImageBuffer<S>, b: &ImageBuffer<S>, want_grad: bool) -> Result<(S, Option<ImageBuffer<S>>)> {
    check(a, b)?;
    let (w, h, c) = (a.width, a.height, a.channels);
    let count = S::from_usize(w * h * c).unwrap();
    let scale = S::one() / count;
    let per_channel: Vec<(S, Vec<S>)> = (0..c)
        .into_par_iter()
        .map(|ch| channel(&plane(a, ch), &plane(b, ch), w, h, scale, want_grad))
        .collect();
    let value = per_channel.iter().map(|(s, _)| *s).sum::<S>() / count;
    if !want_grad {
        return Ok((value, None));
    }
    let mut grad = ImageBuffer::new(w, h, c);
    for (ch, (_, g)) in per_channel.iter().enumerate() {
        for (p, &v) in g.iter().enumerate() {
            grad.data[p * c + ch] = v;
        }
    }
    Ok((value, Some(grad)))
}

/// Mean local SSIM (11×11 Gaussian window, σ = 1.5, unit dynamic range),
/// averaged over pixels and channels.
pub fn ssim_value<S: Scalar>(a: &ImageBuffer<S>, b: &ImageBuffer<S>) -> Result<S> {
    ssim_impl(a, b, false).map(|(v, _)| v)
}

/// SSIM and its gradient with respect to `a`.
pub fn ssim<S: Scalar>(a: &ImageBuffer<S>, b: &ImageBuffer<S>) -> Result<(S, ImageBuffer<S>)> {
    let (v, g) = ssim_impl(a, b, true)?;
    Ok((v, g.unwrap()))
}
