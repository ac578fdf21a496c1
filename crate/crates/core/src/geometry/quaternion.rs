use serde::{Deserialize, Serialize};

use super::Mat3;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rotation stored as an unnormalised quaternion `(w, x, y, z)`; it is
/// normalised every time it is turned into a matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quaternion<S> {
    pub w: S,
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Scalar> Quaternion<S> {
    pub fn new(w: S, x: S, y: S, z: S) -> Self {
        Self { w, x, y, z }
    }

    pub fn identity() -> Self {
        Self::new(S::one(), S::zero(), S::zero(), S::zero())
    }

    /// Rotation by `angle` radians about the (not necessarily unit) `axis`.
    pub fn from_axis_angle(axis: [S; 3], angle: S) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let half = angle / S::lit(2.0);
        let s = half.sin() / n;
        Self::new(half.cos(), axis[0] * s, axis[1] * s, axis[2] * s)
    }

    pub fn to_array(self) -> [S; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_array(a: [S; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn norm(&self) -> S {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !n.is_finite() || n <= S::zero() {
            return Err(Error::InvalidParameter(format!(
                "quaternion must be finite and nonzero, got {:?}",
                self.to_array()
            )));
        }
        Ok(Self::new(self.w / n, self.x / n, self.y / n, self.z / n))
    }

    pub fn to_rotation(&self) -> Result<Mat3<S>> {
        let q = self.normalized()?;
        Ok(q.unit_to_rotation())
    }

    fn unit_to_rotation(&self) -> Mat3<S> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let one = S::one();
        let two = S::lit(2.0);
        [
            [
                one - two * (y * y + z * z),
                two * (x * y - w * z),
                two * (x * z + w * y),
            ],
            [
                two * (x * y + w * z),
                one - two * (x * x + z * z),
                two * (y * z - w * x),
            ],
            [
                two * (x * z - w * y),
                two * (y * z + w * x),
                one - two * (x * x + y * y),
            ],
        ]
    }

    /// Pulls a gradient with respect to the rotation matrix back to the raw
    /// (unnormalised) quaternion components.
    pub fn rotation_backward(&self, d_rot: &Mat3<S>) -> Result<[S; 4]> {
        let n = self.norm();
        let q = self.normalized()?;
        let (w, x, y, z) = (q.w, q.x, q.y, q.z);
        let g = d_rot;
        let two = S::lit(2.0);
        let four = S::lit(4.0);
        let dw = two * (-z * g[0][1] + y * g[0][2] + z * g[1][0] - x * g[1][2] - y * g[2][0]
            + x * g[2][1]);
        let dx = two * (y * g[0][1] + z * g[0][2] + y * g[1][0] - w * g[1][2] + z * g[2][0]
            + w * g[2][1])
            - four * x * (g[1][1] + g[2][2]);
        let dy = two * (x * g[0][1] + w * g[0][2] + x * g[1][0] + z * g[1][2] - w * g[2][0]
            + z * g[2][1])
            - four * y * (g[0][0] + g[2][2]);
        let dz = two * (-w * g[0][1] + x * g[0][2] + w * g[1][0] + y * g[1][2] + x * g[2][0]
            + y * g[2][1])
            - four * z * (g[0][0] + g[1][1]);
        let dq = [dw, dx, dy, dz];
        let qa = q.to_array();
        let proj: S = (0..4).map(|i| qa[i] * dq[i]).sum();
        Ok(std::array::from_fn(|i| (dq[i] - qa[i] * proj) / n))
    }
}

impl<S: Scalar> Default for Quaternion<S> {
    fn default() -> Self {
        Self::identity()
    }
}
