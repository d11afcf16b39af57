//! Rotation representations, forward kinematics and per-frame differencing.
//!
//! Rotations are stored as unit quaternions in canonical form (`w >= 0`).
//! The continuous 6D representation keeps the first two columns of the
//! rotation matrix and is mapped back with Gram–Schmidt.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Result, VtmError};
use crate::skeleton::Skeleton;

pub type Vec3 = Vector3<f64>;

/// A 3D rotation stored as a canonical unit quaternion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// Builds a rotation from quaternion components, normalizing and
    /// resolving the double cover so that `w >= 0`.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !(n > 1e-12) || !n.is_finite() {
            return Err(VtmError::DegenerateInput(format!(
                "quaternion ({w}, {x}, {y}, {z}) has no direction"
            )));
        }
        Ok(Self::canonical(UnitQuaternion::new_normalize(q)))
    }

    fn canonical(q: UnitQuaternion<f64>) -> Self {
        if q.w < 0.0 {
            Rotation(UnitQuaternion::new_unchecked(-q.into_inner()))
        } else {
            Rotation(q)
        }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        match nalgebra::Unit::try_new(axis, 1e-15) {
            Some(axis) => Self::canonical(UnitQuaternion::from_axis_angle(&axis, angle)),
            None => Self::identity(),
        }
    }

    /// Rotation vector (axis times angle in radians).
    pub fn from_scaled_axis(v: Vec3) -> Self {
        Self::canonical(UnitQuaternion::from_scaled_axis(v))
    }

    /// Projects an (approximately) orthonormal matrix onto a rotation.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self::canonical(UnitQuaternion::from_rotation_matrix(
            &Rotation3::from_matrix_unchecked(*m),
        ))
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        *self.0.to_rotation_matrix().matrix()
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Self::canonical(self.0 * other.0)
    }

    pub fn inverse(&self) -> Rotation {
        Self::canonical(self.0.inverse())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Geodesic distance in radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        let d = self.0.inverse() * other.0;
        let q = d.quaternion();
        2.0 * q.vector().norm().atan2(q.w.abs())
    }

    /// Intrinsic Euler composition in the given axis order, angles in degrees.
    pub fn from_euler_degrees(order: &[Axis], angles: &[f64]) -> Rotation {
        let mut q = UnitQuaternion::identity();
        for (axis, angle) in order.iter().zip(angles) {
            q *= UnitQuaternion::from_axis_angle(&axis.unit(), angle.to_radians());
        }
        Self::canonical(q)
    }

    /// Decomposes into `R = Rz(z) * Rx(x) * Ry(y)`; returns `[z, x, y]` in degrees.
    pub fn to_euler_zxy_degrees(&self) -> [f64; 3] {
        let m = self.to_matrix();
        let sx = m[(2, 1)].clamp(-1.0, 1.0);
        let x = sx.asin();
        let (z, y) = if (1.0 - sx.abs()) > 1e-12 {
            ((-m[(0, 1)]).atan2(m[(1, 1)]), (-m[(2, 0)]).atan2(m[(2, 2)]))
        } else {
            // Gimbal lock: fold everything into z.
            (m[(1, 0)].atan2(m[(0, 0)]), 0.0)
        };
        [z.to_degrees(), x.to_degrees(), y.to_degrees()]
    }

    pub fn to_6d(&self) -> Rot6D {
        rot_to_6d(self)
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose(&rhs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(&self) -> nalgebra::Unit<Vec3> {
        match self {
            Axis::X => Vec3::x_axis(),
            Axis::Y => Vec3::y_axis(),
            Axis::Z => Vec3::z_axis(),
        }
    }
}

/// First two columns of a rotation matrix, column-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rot6D(pub [f64; 6]);

impl Rot6D {
    pub const IDENTITY: Rot6D = Rot6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
}

pub fn rot_to_6d(r: &Rotation) -> Rot6D {
    let m = r.to_matrix();
    Rot6D([m[(0, 0)], m[(1, 0)], m[(2, 0)], m[(0, 1)], m[(1, 1)], m[(2, 1)]])
}

/// Gram–Schmidt completion of the two stored columns.
pub fn six_d_to_matrix(d: &Rot6D) -> Result<Matrix3<f64>> {
    let a = Vec3::new(d.0[0], d.0[1], d.0[2]);
    let b = Vec3::new(d.0[3], d.0[4], d.0[5]);
    let an = a.norm();
    if !(an > 1e-12) {
        return Err(VtmError::DegenerateInput("first 6D column is zero".into()));
    }
    let c1 = a / an;
    let b_orth = b - c1 * c1.dot(&b);
    let bn = b_orth.norm();
    if !(bn > 1e-12) {
        return Err(VtmError::DegenerateInput("6D columns are parallel".into()));
    }
    let c2 = b_orth / bn;
    let c3 = c1.cross(&c2);
    Ok(Matrix3::from_columns(&[c1, c2, c3]))
}

pub fn six_d_to_rot(d: &Rot6D) -> Result<Rotation> {
    Ok(Rotation::from_matrix(&six_d_to_matrix(d)?))
}

/// Per-joint local rotations plus the root position (meters).
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub rotations: Vec<Rotation>,
    pub root: Vec3,
}

impl Pose {
    pub fn rest(joints: usize) -> Self {
        Pose {
            rotations: vec![Rotation::identity(); joints],
            root: Vec3::zeros(),
        }
    }
}

/// Global joint rotations alongside positions.
pub fn forward_kinematics_full(skeleton: &Skeleton, pose: &Pose) -> (Vec<Vec3>, Vec<Rotation>) {
    let n = skeleton.num_joints();
    debug_assert_eq!(pose.rotations.len(), n);
    let mut positions = Vec::with_capacity(n);
    let mut globals: Vec<Rotation> = Vec::with_capacity(n);
    for j in 0..n {
        match skeleton.parents()[j] {
            None => {
                positions.push(pose.root);
                globals.push(pose.rotations[j]);
            }
            Some(p) => {
                let pos = positions[p] + globals[p].rotate(&skeleton.offsets()[j]);
                let rot = globals[p] * pose.rotations[j];
                positions.push(pos);
                globals.push(rot);
            }
        }
    }
    (positions, globals)
}

pub fn forward_kinematics(skeleton: &Skeleton, pose: &Pose) -> Vec<Vec3> {
    forward_kinematics_full(skeleton, pose).0
}

/// `vel_t = x_t - x_{t-1}` with `vel_0 = 0`. Deltas are per frame, not per second.
pub fn finite_differences<V: AsRef<[f64]>>(frames: &[V]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let cur = frame.as_ref();
        if t == 0 {
            out.push(vec![0.0; cur.len()]);
        } else {
            let prev = frames[t - 1].as_ref();
            out.push(cur.iter().zip(prev).map(|(a, b)| a - b).collect());
        }
    }
    out
}

/// Second differences with `acc_0 = acc_1 = 0`.
pub fn accelerations<V: AsRef<[f64]>>(frames: &[V]) -> Vec<Vec<f64>> {
    let mut acc = finite_differences(&finite_differences(frames));
    if let Some(a1) = acc.get_mut(1) {
        a1.iter_mut().for_each(|v| *v = 0.0);
    }
    acc
}
