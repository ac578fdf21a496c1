//! Covariance construction and EWA-style perspective projection of 3D
//! Gaussians onto the image plane, with the matching reverse-mode pass.

use super::{mat3_mul, mat3_transpose, Camera, Mat3, Quaternion, Vec3};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Isotropic dilation added to every projected covariance (px²). It doubles as
/// the eigenvalue floor of the 2D footprint.
pub const COV2D_DILATION: f64 = 0.3;

/// Symmetric 2×2 matrix stored as `(xx, xy, yy)`.
pub type Cov2<S> = [S; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Covariance3<S>(pub Mat3<S>);

impl<S: Scalar> Covariance3<S> {
    pub fn matrix(&self) -> &Mat3<S> {
        &self.0
    }
}

fn scale_rotation<S: Scalar>(rotation: &Quaternion<S>, log_scale: &Vec3<S>) -> Result<(Mat3<S>, Vec3<S>)> {
    if !rotation.is_finite() || log_scale.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "covariance inputs must be finite".into(),
        ));
    }
    let r = rotation.to_rotation()?;
    let s = log_scale.map(|l| l.exp());
    Ok((r, s))
}

/// `Σ = R S Sᵀ Rᵀ` with `S = diag(exp(log_scale))`.
pub fn build_covariance<S: Scalar>(rotation: &Quaternion<S>, log_scale: &Vec3<S>) -> Result<Covariance3<S>> {
    let (r, s) = scale_rotation(rotation, log_scale)?;
    let mut m = r;
    for row in m.iter_mut() {
        for j in 0..3 {
            row[j] *= s[j];
        }
    }
    Ok(Covariance3(mat3_mul(&m, &mat3_transpose(&m))))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedGaussian<S> {
    pub mean2d: [S; 2],
    /// Dilated screen-space covariance.
    pub cov2d: Cov2<S>,
    /// Camera-space z.
    pub depth: S,
    pub cam_point: Vec3<S>,
}

/// Rows of `J·W`, the linearised world-to-pixel map at camera-space point `t`.
fn jacobian_rows<S: Scalar>(t: &Vec3<S>, cam: &Camera<S>) -> ([[S; 3]; 2], Mat3<S>) {
    let w = cam.rotation();
    let z = t[2];
    let j = [
        [cam.fx / z, S::zero(), -cam.fx * t[0] / (z * z)],
        [S::zero(), cam.fy / z, -cam.fy * t[1] / (z * z)],
    ];
    let mut tm = [[S::zero(); 3]; 2];
    for r in 0..2 {
        for k in 0..3 {
            tm[r][k] = j[r][0] * w[0][k] + j[r][1] * w[1][k] + j[r][2] * w[2][k];
        }
    }
    (tm, w)
}

fn quad<S: Scalar>(a: &[S; 3], m: &Mat3<S>, b: &[S; 3]) -> S {
    let mut acc = S::zero();
    for i in 0..3 {
        for j in 0..3 {
            acc += a[i] * m[i][j] * b[j];
        }
    }
    acc
}

/// Projects a Gaussian with world mean `mean` and covariance `cov`. Returns
/// `None` (culled) when the mean is not strictly between the clip planes.
pub fn project_gaussian<S: Scalar>(
    mean: &Vec3<S>,
    cov: &Covariance3<S>,
    cam: &Camera<S>,
) -> Option<ProjectedGaussian<S>> {
    let t = cam.world_to_cam_point(mean);
    let z = t[2];
    if !(z > cam.znear) || z >= cam.zfar {
        return None;
    }
    let mean2d = [cam.fx * t[0] / z + cam.cx, cam.fy * t[1] / z + cam.cy];
    let (tm, _) = jacobian_rows(&t, cam);
    let sigma = cov.matrix();
    let dil = S::lit(COV2D_DILATION);
    let cov2d = [
        quad(&tm[0], sigma, &tm[0]) + dil,
        quad(&tm[0], sigma, &tm[1]),
        quad(&tm[1], sigma, &tm[1]) + dil,
    ];
    Some(ProjectedGaussian {
        mean2d,
        cov2d,
        depth: z,
        cam_point: t,
    })
}

/// Inverse ("conic") of a 2×2 covariance, or `None` when singular.
pub fn invert_cov2d<S: Scalar>(cov: &Cov2<S>) -> Option<Cov2<S>> {
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    if !(det > S::zero()) {
        return None;
    }
    Some([cov[2] / det, -cov[1] / det, cov[0] / det])
}

/// Maps a gradient on the conic entries `(A, B, C)` to the covariance entries
/// `(a, b, c)` it was inverted from.
pub fn conic_backward<S: Scalar>(cov: &Cov2<S>, d_conic: &Cov2<S>) -> Cov2<S> {
    let (a, b, c) = (cov[0], cov[1], cov[2]);
    let det = a * c - b * b;
    let inv = S::one() / det;
    let inv2 = inv * inv;
    let two = S::lit(2.0);
    let [ga, gb, gc] = *d_conic;
    let da = ga * (-c * c * inv2) + gb * (b * c * inv2) + gc * (inv - a * c * inv2);
    let db = ga * (two * b * c * inv2) + gb * (-inv - two * b * b * inv2) + gc * (two * a * b * inv2);
    let dc = ga * (inv - a * c * inv2) + gb * (a * b * inv2) + gc * (-a * a * inv2);
    [da, db, dc]
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProjectionGrad<S> {
    pub d_mean: Vec3<S>,
    pub d_rotation: [S; 4],
    pub d_log_scale: Vec3<S>,
}

/// Reverse-mode of [`build_covariance`] followed by [`project_gaussian`]:
/// takes gradients on the projected mean and dilated covariance and returns
/// gradients on the world mean, raw quaternion and log-scales.
pub fn project_gaussian_backward<S: Scalar>(
    mean: &Vec3<S>,
    rotation: &Quaternion<S>,
    log_scale: &Vec3<S>,
    cam: &Camera<S>,
    d_mean2d: &[S; 2],
    d_cov2d: &Cov2<S>,
) -> Result<ProjectionGrad<S>> {
    let (r, s) = scale_rotation(rotation, log_scale)?;
    let mut m = r;
    for row in m.iter_mut() {
        for j in 0..3 {
            row[j] *= s[j];
        }
    }
    let sigma = mat3_mul(&m, &mat3_transpose(&m));

    let t = cam.world_to_cam_point(mean);
    let (tm, w) = jacobian_rows(&t, cam);
    let [da, db, dc] = *d_cov2d;
    let two = S::lit(2.0);

    // cov2d -> Sigma (full, unsymmetrised gradient)
    let mut d_sigma = [[S::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            d_sigma[i][j] = da * tm[0][i] * tm[0][j] + db * tm[0][i] * tm[1][j] + dc * tm[1][i] * tm[1][j];
        }
    }
    // cov2d -> rows of T = J W
    let s_t0 = std::array::from_fn::<S, 3, _>(|i| (0..3).map(|k| sigma[i][k] * tm[0][k]).sum());
    let s_t1 = std::array::from_fn::<S, 3, _>(|i| (0..3).map(|k| sigma[i][k] * tm[1][k]).sum());
    let d_t0: [S; 3] = std::array::from_fn(|i| two * da * s_t0[i] + db * s_t1[i]);
    let d_t1: [S; 3] = std::array::from_fn(|i| db * s_t0[i] + two * dc * s_t1[i]);
    // T = J W  ->  dJ = dT Wᵀ
    let d_j = [
        std::array::from_fn::<S, 3, _>(|mi| (0..3).map(|k| d_t0[k] * w[mi][k]).sum()),
        std::array::from_fn::<S, 3, _>(|mi| (0..3).map(|k| d_t1[k] * w[mi][k]).sum()),
    ];

    let (x, y, z) = (t[0], t[1], t[2]);
    let (fx, fy) = (cam.fx, cam.fy);
    let z2 = z * z;
    let z3 = z2 * z;
    let mut d_t = [S::zero(); 3];
    // Jacobian entries
    d_t[2] += d_j[0][0] * (-fx / z2);
    d_t[0] += d_j[0][2] * (-fx / z2);
    d_t[2] += d_j[0][2] * (two * fx * x / z3);
    d_t[2] += d_j[1][1] * (-fy / z2);
    d_t[1] += d_j[1][2] * (-fy / z2);
    d_t[2] += d_j[1][2] * (two * fy * y / z3);
    // projected mean
    d_t[0] += d_mean2d[0] * fx / z;
    d_t[2] += d_mean2d[0] * (-fx * x / z2);
    d_t[1] += d_mean2d[1] * fy / z;
    d_t[2] += d_mean2d[1] * (-fy * y / z2);
    let d_mean = std::array::from_fn(|i| (0..3).map(|k| w[k][i] * d_t[k]).sum());

    // Sigma = M Mᵀ  ->  dM = (G + Gᵀ) M
    let mut d_m = [[S::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            d_m[i][j] = (0..3)
                .map(|k| (d_sigma[i][k] + d_sigma[k][i]) * m[k][j])
                .sum();
        }
    }
    let mut d_r = [[S::zero(); 3]; 3];
    let mut d_log_scale = [S::zero(); 3];
    for j in 0..3 {
        let mut ds = S::zero();
        for i in 0..3 {
            d_r[i][j] = d_m[i][j] * s[j];
            ds += d_m[i][j] * r[i][j];
        }
        d_log_scale[j] = ds * s[j];
    }
    let d_rotation = rotation.rotation_backward(&d_r)?;
    Ok(ProjectionGrad {
        d_mean,
        d_rotation,
        d_log_scale,
    })
}
