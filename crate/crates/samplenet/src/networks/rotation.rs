//! Unit-quaternion rotations.
//!
//! Quaternions are stored `(w, x, y, z)` and normalized on construction.
//! The matrix convention is column vectors: `p' = R p`. Euler angles
//! compose intrinsically Z-Y-X, i.e. `R = Rz(a) Ry(b) Rx(c)`.

use crate::geometry::PointCloud;

use super::NetworkError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    q: [f64; 4],
}

fn quat_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    let [aw, ax, ay, az] = a;
    let [bw, bx, by, bz] = b;
    [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ]
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation {
            q: [1.0, 0.0, 0.0, 0.0],
        }
    }

    /// Normalize a raw quaternion. Errors on (near-)zero input.
    pub fn from_quaternion(raw: [f64; 4]) -> Result<Self, NetworkError> {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(NetworkError::DegenerateQuaternion { norm });
        }
        Ok(Rotation {
            q: [raw[0] / norm, raw[1] / norm, raw[2] / norm, raw[3] / norm],
        })
    }

    /// Intrinsic Z-Y-X Euler angles, in radians.
    pub fn from_euler_zyx(z: f64, y: f64, x: f64) -> Self {
        let qz = [(z / 2.0).cos(), 0.0, 0.0, (z / 2.0).sin()];
        let qy = [(y / 2.0).cos(), 0.0, (y / 2.0).sin(), 0.0];
        let qx = [(x / 2.0).cos(), (x / 2.0).sin(), 0.0, 0.0];
        Rotation {
            q: quat_mul(quat_mul(qz, qy), qx),
        }
    }

    pub fn quaternion(&self) -> [f64; 4] {
        self.q
    }

    pub fn inverse(&self) -> Self {
        Rotation {
            q: [self.q[0], -self.q[1], -self.q[2], -self.q[3]],
        }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let [w, x, y, z] = self.q;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// Row-major 9-element matrix, handy for graph constants.
    pub fn matrix_flat(&self) -> Vec<f64> {
        self.matrix().iter().flatten().copied().collect()
    }

    pub fn apply_point(&self, p: [f64; 3]) -> [f64; 3] {
        let m = self.matrix();
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
        ]
    }

    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud::new(cloud.points().iter().map(|&p| self.apply_point(p)).collect())
            .expect("rotation preserves finiteness")
    }
}

/// Rotation error in degrees: `2 acos(2 <q_pred, q_gt>^2 - 1)`, with the
/// acos argument clamped to [-1, 1] against rounding. Invariant under the
/// quaternion double cover (`q` and `-q` give the same error).
pub fn rotation_error_deg(pred: &Rotation, gt: &Rotation) -> f64 {
    let dot: f64 = pred
        .quaternion()
        .iter()
        .zip(gt.quaternion().iter())
        .map(|(a, b)| a * b)
        .sum();
    let arg = (2.0 * dot * dot - 1.0).clamp(-1.0, 1.0);
    2.0 * arg.acos().to_degrees()
}
