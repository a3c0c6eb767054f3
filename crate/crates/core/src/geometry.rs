//! Rotations, rigid poses and timestamps.
//!
//! Quaternions are stored scalar-first (w, x, y, z). File formats use the
//! TUM order (x, y, z, w); conversion happens in [`crate::io`].

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Sub};

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{invalid, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Angle below which slerp degrades to normalized lerp.
const SLERP_NLERP_ANGLE: f64 = 1e-6;

/// Absolute time in seconds on a single clock.
///
/// Whether a value lives on the sensor or the host clock is a property of
/// the surrounding context; converting between the two goes through
/// [`crate::clocksync::ClockModel`].
#[derive(Debug, Clone, Copy, Default, serde::Serialize, serde::Deserialize)]
pub struct Timestamp(f64);

impl Timestamp {
    pub fn from_secs(secs: f64) -> Self {
        debug_assert!(secs.is_finite(), "non-finite timestamp");
        Timestamp(secs)
    }

    pub fn try_from_secs(secs: f64) -> Result<Self> {
        if secs.is_finite() {
            Ok(Timestamp(secs))
        } else {
            Err(invalid(format!("non-finite timestamp {secs}")))
        }
    }

    pub fn secs(self) -> f64 {
        self.0
    }
}

impl PartialEq for Timestamp {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Timestamp {}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add<f64> for Timestamp {
    type Output = Timestamp;
    fn add(self, rhs: f64) -> Timestamp {
        Timestamp(self.0 + rhs)
    }
}

impl Sub<f64> for Timestamp {
    type Output = Timestamp;
    fn sub(self, rhs: f64) -> Timestamp {
        Timestamp(self.0 - rhs)
    }
}

impl Sub for Timestamp {
    type Output = f64;
    fn sub(self, rhs: Timestamp) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.0)
    }
}

/// A 3D rotation held as a unit quaternion.
///
/// `q` and `-q` represent the same rotation and compare equal.
#[derive(Debug, Clone, Copy)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// Builds a rotation from scalar-first components, renormalizing.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(invalid(format!(
                "quaternion ({w}, {x}, {y}, {z}) cannot be normalized"
            )));
        }
        Ok(Rotation(UnitQuaternion::new_unchecked(q / n)))
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Rotation(UnitQuaternion::new_normalize(q.into_inner()))
    }

    /// Projects an (approximately) orthonormal matrix onto a rotation.
    pub fn from_matrix(m: &Mat3) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
        Rotation(UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Rotation::identity();
        }
        so3_exp(&(axis * (angle / n)))
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn matrix(&self) -> Mat3 {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.inverse())
    }

    pub fn compose(&self, rhs: &Rotation) -> Self {
        Rotation(renormalize(self.0 * rhs.0))
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0.transform_vector(v)
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        so3_log(self).norm()
    }

    /// Geodesic distance to `other` in radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        let (a, b) = (self.0.quaternion(), other.0.quaternion());
        let (av, bv) = (a.imag(), b.imag());
        // conj(a)·b, written so that a == b cancels exactly.
        let w = a.w * b.w + av.dot(&bv);
        let v = bv * a.w - av * b.w - av.cross(&bv);
        2.0 * v.norm().atan2(w.abs())
    }

    /// Spherical interpolation along the shortest arc; `u = 0` gives `self`.
    pub fn slerp(&self, other: &Rotation, u: f64) -> Rotation {
        let a = self.0.quaternion().coords;
        let mut b = other.0.quaternion().coords;
        let mut dot = a.dot(&b);
        if dot < 0.0 {
            b = -b;
            dot = -dot;
        }
        let theta = dot.min(1.0).acos();
        let v = if theta < SLERP_NLERP_ANGLE {
            a * (1.0 - u) + b * u
        } else {
            let s = theta.sin();
            a * (((1.0 - u) * theta).sin() / s) + b * ((u * theta).sin() / s)
        };
        Rotation(UnitQuaternion::new_normalize(Quaternion::from(v)))
    }

    pub fn approx_eq(&self, other: &Rotation, tol: f64) -> bool {
        self.angle_to(other) <= tol
    }
}

impl PartialEq for Rotation {
    fn eq(&self, other: &Self) -> bool {
        let a = self.0.quaternion().coords;
        let b = other.0.quaternion().coords;
        a == b || a == -b
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if (q.coords.norm_squared() - 1.0).abs() <= 4.0 * f64::EPSILON {
        return q;
    }
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Exponential map from a rotation vector (axis times angle, radians).
pub fn so3_exp(omega: &Vec3) -> Rotation {
    let theta = omega.norm();
    let half = 0.5 * theta;
    let (w, k) = if theta < 1e-8 {
        // sin(θ/2)/θ ≈ 1/2 − θ²/48
        (1.0 - theta * theta / 8.0, 0.5 - theta * theta / 48.0)
    } else {
        (half.cos(), half.sin() / theta)
    };
    let q = Quaternion::new(w, omega.x * k, omega.y * k, omega.z * k);
    Rotation(UnitQuaternion::new_normalize(q))
}

/// Logarithm map; the result has norm at most π.
pub fn so3_log(r: &Rotation) -> Vec3 {
    let q = r.0.quaternion();
    let (w, v) = if q.w < 0.0 {
        (-q.w, -q.imag())
    } else {
        (q.w, q.imag())
    };
    let n = v.norm();
    if n < 1e-12 {
        // θ ≈ 2 n / w
        return v * (2.0 / w.max(1e-300));
    }
    let theta = 2.0 * n.atan2(w);
    v * (theta / n)
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// A timestamped rigid transform mapping body-frame points into the
/// parent frame: `p_parent = R * p_body + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub t: Timestamp,
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(t: Timestamp, rotation: Rotation, translation: Vec3) -> Self {
        Pose {
            t,
            rotation,
            translation,
        }
    }

    pub fn identity(t: Timestamp) -> Self {
        Pose::new(t, Rotation::identity(), Vec3::zeros())
    }

    /// Rigid transform with no meaningful time.
    pub fn transform(rotation: Rotation, translation: Vec3) -> Self {
        Pose::new(Timestamp::default(), rotation, translation)
    }

    /// `self ∘ rhs`; keeps `self.t`.
    pub fn compose(&self, rhs: &Pose) -> Pose {
        Pose {
            t: self.t,
            rotation: self.rotation.compose(&rhs.rotation),
            translation: self.rotation.rotate(&rhs.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let r_inv = self.rotation.inverse();
        Pose {
            t: self.t,
            rotation: r_inv,
            translation: -r_inv.rotate(&self.translation),
        }
    }

    /// `self⁻¹ ∘ other`, the motion from `self` to `other` in `self`'s frame.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn with_time(mut self, t: Timestamp) -> Pose {
        self.t = t;
        self
    }
}
