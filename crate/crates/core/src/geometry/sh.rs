//! Real spherical-harmonics colour evaluation (degrees 0..=3). Coefficients
//! are stored basis-major, `sh[k * 3 + channel]`.

use super::Vec3;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAX_SH_DEGREE: usize = 3;
pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Number of scalars per primitive for degree `degree`: `3·(L+1)²`.
pub const fn sh_coeff_count(degree: usize) -> usize {
    3 * (degree + 1) * (degree + 1)
}

/// Basis values `Y_k(dir)` for `k < (degree+1)²`; entries past that are zero.
pub fn sh_basis<S: Scalar>(degree: usize, dir: &Vec3<S>) -> [S; 16] {
    let mut out = [S::zero(); 16];
    out[0] = S::lit(SH_C0);
    if degree == 0 {
        return out;
    }
    let (x, y, z) = (dir[0], dir[1], dir[2]);
    let c1 = S::lit(SH_C1);
    out[1] = -c1 * y;
    out[2] = c1 * z;
    out[3] = -c1 * x;
    if degree == 1 {
        return out;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    let two = S::lit(2.0);
    out[4] = S::lit(SH_C2[0]) * xy;
    out[5] = S::lit(SH_C2[1]) * yz;
    out[6] = S::lit(SH_C2[2]) * (two * zz - xx - yy);
    out[7] = S::lit(SH_C2[3]) * xz;
    out[8] = S::lit(SH_C2[4]) * (xx - yy);
    if degree == 2 {
        return out;
    }
    let three = S::lit(3.0);
    let four = S::lit(4.0);
    out[9] = S::lit(SH_C3[0]) * y * (three * xx - yy);
    out[10] = S::lit(SH_C3[1]) * xy * z;
    out[11] = S::lit(SH_C3[2]) * y * (four * zz - xx - yy);
    out[12] = S::lit(SH_C3[3]) * z * (two * zz - three * xx - three * yy);
    out[13] = S::lit(SH_C3[4]) * x * (four * zz - xx - yy);
    out[14] = S::lit(SH_C3[5]) * z * (xx - yy);
    out[15] = S::lit(SH_C3[6]) * x * (xx - three * yy);
    out
}

fn check_count(len: usize, degree: usize) -> Result<()> {
    if degree > MAX_SH_DEGREE {
        return Err(Error::Shape(format!("SH degree {degree} exceeds {MAX_SH_DEGREE}")));
    }
    if len != sh_coeff_count(degree) {
        return Err(Error::Shape(format!(
            "degree {degree} needs {} SH coefficients, got {len}",
            sh_coeff_count(degree)
        )));
    }
    Ok(())
}

/// RGB colour `max(Σ_k Y_k(dir)·sh_k + 0.5, 0)` per channel.
pub fn sh_to_color<S: Scalar>(sh: &[S], degree: usize, dir: &Vec3<S>) -> Result<[S; 3]> {
    check_count(sh.len(), degree)?;
    let basis = sh_basis(degree, dir);
    let half = S::lit(0.5);
    let mut rgb = [half; 3];
    for (k, b) in basis.iter().take((degree + 1) * (degree + 1)).enumerate() {
        for (ch, c) in rgb.iter_mut().enumerate() {
            *c += *b * sh[k * 3 + ch];
        }
    }
    Ok(rgb.map(|c| c.max(S::zero())))
}

/// Accumulates `d_rgb` into `d_sh`. Channels whose colour was clamped to
/// zero receive no gradient. The view direction is treated as a constant.
pub fn sh_backward<S: Scalar>(degree: usize, dir: &Vec3<S>, rgb: &[S; 3], d_rgb: &[S; 3], d_sh: &mut [S]) {
    let basis = sh_basis(degree, dir);
    for (k, b) in basis.iter().take((degree + 1) * (degree + 1)).enumerate() {
        for ch in 0..3 {
            if rgb[ch] > S::zero() {
                d_sh[k * 3 + ch] += *b * d_rgb[ch];
            }
        }
    }
}
