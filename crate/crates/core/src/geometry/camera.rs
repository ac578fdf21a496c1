use serde::{Deserialize, Serialize};

use super::{cross3, dot3, mat3_mul, mat3_transpose, normalize3, sub3, Mat3, Vec3};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pinhole camera. The pose is a row-major world-to-camera rigid transform;
/// camera space has +x right, +y down and looks down +z. Pixel `(i, j)` is
/// sampled at the continuous coordinate `(i, j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera<S> {
    pub fx: S,
    pub fy: S,
    pub cx: S,
    pub cy: S,
    pub width: u32,
    pub height: u32,
    pub world_to_camera: [[S; 4]; 4],
    pub znear: S,
    pub zfar: S,
}

impl<S: Scalar> Camera<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: S,
        fy: S,
        cx: S,
        cy: S,
        width: u32,
        height: u32,
        world_to_camera: [[S; 4]; 4],
        znear: S,
        zfar: S,
    ) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            world_to_camera,
            znear,
            zfar,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`; `up` fixes the roll.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vec3<S>,
        target: Vec3<S>,
        up: Vec3<S>,
        fx: S,
        fy: S,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = normalize3(&sub3(&target, &eye));
        let right = normalize3(&cross3(&forward, &up));
        let down = cross3(&forward, &right);
        let rot = [right, down, forward];
        let t = [
            -dot3(&rot[0], &eye),
            -dot3(&rot[1], &eye),
            -dot3(&rot[2], &eye),
        ];
        let z = S::zero();
        let m = [
            [rot[0][0], rot[0][1], rot[0][2], t[0]],
            [rot[1][0], rot[1][1], rot[1][2], t[1]],
            [rot[2][0], rot[2][1], rot[2][2], t[2]],
            [z, z, z, S::one()],
        ];
        let half = S::lit(0.5);
        Self::new(
            fx,
            fy,
            S::from_u32(width).unwrap() * half,
            S::from_u32(height).unwrap() * half,
            width,
            height,
            m,
            S::lit(0.01),
            S::lit(100.0),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter(format!(
                "camera dims must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        let finite = [self.fx, self.fy, self.cx, self.cy, self.znear, self.zfar]
            .iter()
            .chain(self.world_to_camera.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("camera has non-finite values".into()));
        }
        if self.fx <= S::zero() || self.fy <= S::zero() {
            return Err(Error::InvalidParameter("focal lengths must be positive".into()));
        }
        if !(self.znear > S::zero() && self.znear < self.zfar) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < znear < zfar, got {} / {}",
                self.znear, self.zfar
            )));
        }
        let r = self.rotation();
        let rtr = mat3_mul(&mat3_transpose(&r), &r);
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (rtr[i][j].as_f64() - expected).abs() > 1e-5 {
                    return Err(Error::InvalidParameter(
                        "world_to_camera rotation block is not orthonormal".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn rotation(&self) -> Mat3<S> {
        let m = &self.world_to_camera;
        [
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ]
    }

    pub fn translation(&self) -> Vec3<S> {
        let m = &self.world_to_camera;
        [m[0][3], m[1][3], m[2][3]]
    }

    pub fn world_to_cam_point(&self, p: &Vec3<S>) -> Vec3<S> {
        let m = &self.world_to_camera;
        std::array::from_fn(|i| m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2] + m[i][3])
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vec3<S> {
        let r = self.rotation();
        let t = self.translation();
        let rt = mat3_transpose(&r);
        std::array::from_fn(|i| -dot3(&rt[i], &t))
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}
