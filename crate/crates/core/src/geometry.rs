//! Poses, quaternions and the 5-DoF guidance error.
//!
//! World frame: right-handed, `x` horizontal, `y` up, `z` forward. Every pose
//! places its drill bit along the local `y` axis; rotation about that axis is
//! the unconstrained sixth degree of freedom and never contributes to the
//! error. Lengths are millimetres and angles are degrees at every public
//! boundary.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::canon::serialize_fixed6_slice;

/// Accepted deviation of an externally supplied quaternion from unit norm.
/// Inputs inside the band are renormalized, anything outside is rejected.
pub const QUAT_INPUT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("quaternion norm {norm} is not within {QUAT_INPUT_TOLERANCE} of 1")]
    NonUnitQuaternion { norm: f64 },
    #[error("non-finite component in {0}")]
    NonFinite(&'static str),
    #[error("axis must be non-zero")]
    ZeroAxis,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction, or `None` for a zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Serialize for Vec3 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serialize_fixed6_slice(&self.to_array(), s)
    }
}

impl<'de> Deserialize<'de> for Vec3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(d)?;
        let v = Vec3::new(x, y, z);
        if !v.is_finite() {
            return Err(serde::de::Error::custom("non-finite vector component"));
        }
        Ok(v)
    }
}

/// Rotation stored as a unit quaternion `(w, x, y, z)`.
///
/// Every constructor and operation renormalizes, so the norm stays within
/// 1e-9 of one. `q` and `-q` are the same rotation; use [`UnitQuat::same_rotation`]
/// to compare.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Validates and renormalizes raw components.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        if !(w.is_finite() && x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(GeometryError::NonFinite("quaternion"));
        }
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if (norm - 1.0).abs() > QUAT_INPUT_TOLERANCE {
            return Err(GeometryError::NonUnitQuaternion { norm });
        }
        Ok(Self::renormalized(w, x, y, z))
    }

    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        UnitQuat { w: w / n, x: x / n, y: y / n, z: z / n }
    }

    /// Rotation of `degrees` about `axis` (right-hand rule).
    pub fn from_axis_angle(axis: Vec3, degrees: f64) -> Result<Self, GeometryError> {
        let a = axis.normalized().ok_or(GeometryError::ZeroAxis)?;
        if !degrees.is_finite() {
            return Err(GeometryError::NonFinite("angle"));
        }
        let half = degrees.to_radians() * 0.5;
        let s = half.sin();
        Ok(Self::renormalized(half.cos(), a.x * s, a.y * s, a.z * s))
    }

    /// Rotation whose axis is `v / |v|` and angle `|v|` radians.
    pub fn from_rotation_vector(v: Vec3) -> Self {
        let angle = v.norm();
        if angle < 1e-300 {
            return Self::IDENTITY;
        }
        let half = angle * 0.5;
        let s = half.sin() / angle;
        Self::renormalized(half.cos(), v.x * s, v.y * s, v.z * s)
    }

    /// Uniformly distributed rotation.
    pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let c: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-6 {
                return Self::renormalized(c[0], c[1], c[2], c[3]);
            }
        }
    }

    /// Shortest rotation taking direction `from` onto direction `to`.
    pub fn from_to(from: Vec3, to: Vec3) -> Result<Self, GeometryError> {
        let a = from.normalized().ok_or(GeometryError::ZeroAxis)?;
        let b = to.normalized().ok_or(GeometryError::ZeroAxis)?;
        let d = a.dot(b);
        if d < -1.0 + 1e-12 {
            // any axis orthogonal to `a`
            let helper = if a.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
            return Self::from_axis_angle(a.cross(helper), 180.0);
        }
        let c = a.cross(b);
        Ok(Self::renormalized(1.0 + d, c.x, c.y, c.z))
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn inverse(self) -> Self {
        UnitQuat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Representative with `w >= 0`.
    pub fn canonical(self) -> Self {
        if self.w < 0.0 {
            UnitQuat { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
        } else {
            self
        }
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        // v' = v + 2w (u x v) + 2 u x (u x v)
        let u = self.vector();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let c = self.canonical();
        2.0 * c.vector().norm().atan2(c.w)
    }

    /// Axis times angle (radians) of the canonical representative.
    pub fn rotation_vector(&self) -> Vec3 {
        let c = self.canonical();
        let s = c.vector().norm();
        if s < 1e-300 {
            return Vec3::ZERO;
        }
        let angle = 2.0 * s.atan2(c.w);
        c.vector() * (angle / s)
    }

    /// True when both quaternions describe the same rotation within `tol`
    /// on the components (sign-insensitive).
    pub fn same_rotation(&self, o: &UnitQuat, tol: f64) -> bool {
        let d = |s: f64| {
            (self.w - s * o.w)
                .abs()
                .max((self.x - s * o.x).abs())
                .max((self.y - s * o.y).abs())
                .max((self.z - s * o.z).abs())
        };
        d(1.0) <= tol || d(-1.0) <= tol
    }
}

impl Mul for UnitQuat {
    type Output = UnitQuat;
    fn mul(self, o: UnitQuat) -> UnitQuat {
        UnitQuat::renormalized(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

impl Serialize for UnitQuat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serialize_fixed6_slice(&self.to_array(), s)
    }
}

impl<'de> Deserialize<'de> for UnitQuat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [w, x, y, z] = <[f64; 4]>::deserialize(d)?;
        UnitQuat::new(w, x, y, z).map_err(serde::de::Error::custom)
    }
}

/// Position (mm, world frame) and orientation. The drill bit lies along the
/// local `y` axis with the tooltip at `position`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuat,
}

impl Pose {
    pub const fn new(position: Vec3, orientation: UnitQuat) -> Self {
        Self { position, orientation }
    }

    pub fn from_position(position: Vec3) -> Self {
        Self { position, orientation: UnitQuat::IDENTITY }
    }

    /// Drill-bit direction in world coordinates.
    pub fn bit_axis(&self) -> Vec3 {
        self.orientation.rotate(Vec3::Y)
    }

    /// Maps a point given in this pose's local frame to world coordinates.
    pub fn transform_point(&self, local: Vec3) -> Vec3 {
        self.position + self.orientation.rotate(local)
    }

    /// `self` followed by `local` expressed in `self`'s frame.
    pub fn compose(&self, local: &Pose) -> Pose {
        Pose { position: self.transform_point(local.position), orientation: self.orientation * local.orientation }
    }
}

/// Positional and rotational error between tool and target.
///
/// `pe_vec` is the signed displacement the tool still has to travel (mm,
/// world axes). `re_x`/`re_z` are the swing rotation vector expressed in the
/// twist-free tool frame, see [`guidance_frame`] (degrees, right-hand rule),
/// `rm` the total swing angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GuidanceError {
    pub pe_vec: Vec3,
    pub pm: f64,
    pub re_x: f64,
    pub re_z: f64,
    pub rm: f64,
}

impl GuidanceError {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds an error from its signed components, deriving both magnitudes.
    pub fn from_components(pe_vec: Vec3, re_x: f64, re_z: f64) -> Self {
        Self { pe_vec, pm: pe_vec.norm(), re_x, re_z, rm: re_x.hypot(re_z) }
    }

    pub fn is_finite(&self) -> bool {
        self.pe_vec.is_finite()
            && self.pm.is_finite()
            && self.re_x.is_finite()
            && self.re_z.is_finite()
            && self.rm.is_finite()
    }
}

/// Splits `q` into `swing * twist`, where `twist` rotates purely about `axis`
/// and `swing`'s axis is orthogonal to it. Both parts come back with `w >= 0`.
///
/// When `q` is a half-turn about an axis orthogonal to `axis` the twist is
/// undefined; identity is returned as the twist and `q` as the swing.
pub fn swing_twist(q: UnitQuat, axis: Vec3) -> Result<(UnitQuat, UnitQuat), GeometryError> {
    let a = axis.normalized().ok_or(GeometryError::ZeroAxis)?;
    let q = q.canonical();
    let p = a * q.vector().dot(a);
    let n = (q.w * q.w + p.dot(p)).sqrt();
    if n < 1e-12 {
        return Ok((q, UnitQuat::IDENTITY));
    }
    let twist = UnitQuat { w: q.w / n, x: p.x / n, y: p.y / n, z: p.z / n };
    let swing = (q * twist.inverse()).canonical();
    Ok((swing, twist))
}

/// Half-turn threshold (radians) below pi at which the swing axis is
/// considered undefined.
const HALF_TURN_EPS: f64 = 1e-9;

/// Tool orientation with its twist about the bit axis (relative to the
/// target) removed: the target frame swung onto the tool's bit axis.
/// Rotational error components are expressed in this frame, so they do not
/// change when the tool spins about its own bit axis.
pub fn guidance_frame(tool: &UnitQuat, target: &UnitQuat) -> UnitQuat {
    let q_rel = (*tool * target.inverse()).canonical();
    let (swing, _) = swing_twist(q_rel, target.rotate(Vec3::Y)).expect("bit axis of a unit quaternion is non-zero");
    swing * *target
}

/// Error of `tool` relative to `target`.
///
/// The relative rotation `tool * target^-1` is split about the target bit
/// axis; the twist is dropped and the swing, expressed in the
/// [`guidance_frame`], yields `re_x`/`re_z`. When the bit axes are
/// anti-parallel the swing axis is taken as frame `x`, giving `re_x = 180`,
/// `re_z = 0`.
pub fn compute_error(tool: &Pose, target: &Pose) -> GuidanceError {
    let pe_vec = target.position - tool.position;
    let q_rel = (tool.orientation * target.orientation.inverse()).canonical();
    let (swing, _twist) = swing_twist(q_rel, target.bit_axis()).expect("bit axis of a unit quaternion is non-zero");
    let rv = swing.rotation_vector();
    let (re_x, re_z) = if rv.norm() >= PI - HALF_TURN_EPS {
        (180.0, 0.0)
    } else {
        // the swing fixes its own axis, so frame and target components agree
        let local = target.orientation.inverse().rotate(rv);
        (local.x.to_degrees(), local.z.to_degrees())
    };
    GuidanceError::from_components(pe_vec, re_x, re_z)
}
