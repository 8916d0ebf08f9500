//! Scalar abstraction shared by every module.

use nalgebra::{RealField, Vector3};
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point types the pipeline can run on.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Tolerance used when validating unit vectors and rotations.
    fn validation_eps() -> Self;
}

impl Real for f32 {
    fn validation_eps() -> Self {
        2e-5
    }
}

impl Real for f64 {
    fn validation_eps() -> Self {
        1e-6
    }
}

pub type Vec3<T> = Vector3<T>;

/// Converts an `f64` literal into `T`.
#[inline(always)]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

#[inline(always)]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// `arccos` with the argument clamped to `[-1, 1]`.
#[inline]
pub fn safe_acos<T: Real>(c: T) -> T {
    c.clamp(-T::one(), T::one()).acos()
}

/// Angle between two (not necessarily unit) vectors.
pub fn angle_between<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    let denom = a.norm() * b.norm();
    if denom <= T::zero() {
        return T::zero();
    }
    safe_acos(a.dot(b) / denom)
}

pub fn vec3_to_array<T: Real>(v: &Vec3<T>) -> [f64; 3] {
    [to_f64(v.x), to_f64(v.y), to_f64(v.z)]
}

pub fn vec3_from_array<T: Real>(a: [f64; 3]) -> Vec3<T> {
    Vec3::new(lit(a[0]), lit(a[1]), lit(a[2]))
}

/// Small deterministic hash used to derive per-item random streams.
#[inline]
pub(crate) fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
