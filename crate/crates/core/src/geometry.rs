//! Unit-sphere primitives shared by every other module.
//!
//! Pairwise translation directions are unoriented: `g` and `-g` describe the
//! same line. Stored directions therefore use a canonical sign (the first
//! component with magnitude above [`SIGN_EPS`] is non-negative), and every
//! residual below is invariant under negation of its arguments.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Norm below which a vector is treated as zero.
pub const DEGENERATE_NORM: f64 = 1e-12;
/// Components smaller than this are skipped when choosing the canonical sign.
pub const SIGN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("vector norm is below {DEGENERATE_NORM}")]
    DegenerateVector,
    #[error("matrix is not a proper rotation")]
    NotRotation,
    #[error("calibration matrix is not invertible upper triangular")]
    InvalidCalibration,
}

/// A unit 3-vector.
///
/// Values built through [`unit_normalize`] carry the canonical sign; bearings
/// built through [`bearing`] keep their geometric sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Direction(Vector3<f64>);

impl Direction {
    /// Wraps a vector that is already unit length. Only checked in debug builds.
    pub fn from_unit(v: Vector3<f64>) -> Self {
        debug_assert!((v.norm() - 1.0).abs() < 1e-9, "not unit: {v:?}");
        Direction(v)
    }

    pub fn x() -> Self {
        Direction(Vector3::x())
    }

    pub fn y() -> Self {
        Direction(Vector3::y())
    }

    pub fn z() -> Self {
        Direction(Vector3::z())
    }

    #[inline]
    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    #[inline]
    pub fn dot(&self, other: &Direction) -> f64 {
        self.0.dot(&other.0)
    }

    #[inline]
    pub fn cross(&self, other: &Direction) -> Vector3<f64> {
        self.0.cross(&other.0)
    }

    /// Returns the same direction with the canonical sign applied.
    pub fn canonical(self) -> Self {
        Direction(canonicalize(self.0))
    }

    pub fn is_canonical(&self) -> bool {
        self.0 == canonicalize(self.0)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }
}

impl std::ops::Neg for Direction {
    type Output = Direction;

    fn neg(self) -> Direction {
        Direction(-self.0)
    }
}

impl From<[f64; 3]> for Direction {
    fn from(a: [f64; 3]) -> Self {
        Direction(Vector3::new(a[0], a[1], a[2]))
    }
}

impl From<Direction> for [f64; 3] {
    fn from(d: Direction) -> Self {
        d.to_array()
    }
}

fn canonicalize(v: Vector3<f64>) -> Vector3<f64> {
    match v.iter().find(|c| c.abs() > SIGN_EPS) {
        Some(c) if *c < 0.0 => -v,
        _ => v,
    }
}

/// Camera-frame-to-world rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let ortho = (m.transpose() * m - Matrix3::identity()).amax();
        if !m.iter().all(|v| v.is_finite()) || ortho > 1e-9 || (m.determinant() - 1.0).abs() > 1e-9 {
            return Err(GeometryError::NotRotation);
        }
        Ok(Rotation(m))
    }

    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    pub fn about_axis(axis: Vector3<f64>, angle: f64) -> Self {
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Rotation(*r.matrix())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// Upper-triangular intrinsic calibration matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    inverse: Matrix3<f64>,
}

impl Calibration {
    pub fn new(k: Matrix3<f64>) -> Result<Self, GeometryError> {
        let upper = (0..3).all(|r| (0..r).all(|c| k[(r, c)] == 0.0));
        let diag_ok = (0..3).all(|i| k[(i, i)] != 0.0 && k[(i, i)].is_finite());
        if !upper || !diag_ok {
            return Err(GeometryError::InvalidCalibration);
        }
        let inverse = k.try_inverse().ok_or(GeometryError::InvalidCalibration)?;
        Ok(Calibration { inverse })
    }

    pub fn identity() -> Self {
        Calibration { inverse: Matrix3::identity() }
    }

    pub fn inverse(&self) -> &Matrix3<f64> {
        &self.inverse
    }
}

/// Normalizes `v` and applies the canonical sign.
pub fn unit_normalize(v: Vector3<f64>) -> Result<Direction, GeometryError> {
    let n = v.norm();
    if !(n > DEGENERATE_NORM) {
        return Err(GeometryError::DegenerateVector);
    }
    Ok(Direction(canonicalize(v / n)))
}

/// World-frame bearing of a homogeneous pixel. The sign is left untouched so
/// that the cross product of two bearings keeps its geometric meaning.
pub fn bearing(rot: &Rotation, calib: &Calibration, pixel: Vector3<f64>) -> Result<Direction, GeometryError> {
    let v = rot.matrix() * calib.inverse() * pixel;
    let n = v.norm();
    if !(n > DEGENERATE_NORM) {
        return Err(GeometryError::DegenerateVector);
    }
    Ok(Direction(v / n))
}

/// Correspondence normal `b_i × b_j / |b_i × b_j|`, or `None` for parallel bearings.
pub fn correspondence_normal(b_i: &Direction, b_j: &Direction) -> Option<Direction> {
    unit_normalize(b_i.cross(b_j)).ok()
}

/// `arcsin |g·x|` in radians.
#[inline]
pub fn angular_residual(g: &Direction, x: &Direction) -> f64 {
    g.dot(x).abs().min(1.0).asin()
}

/// `sqrt(1 - (c·g)^2)`, evaluated as `|c × g|` to stay accurate near zero.
#[inline]
pub fn unoriented_error(c: &Direction, g_star: &Direction) -> f64 {
    c.cross(g_star).norm().min(1.0)
}

/// `ga · (gb × gc)`.
#[inline]
pub fn triple_product(ga: &Direction, gb: &Direction, gc: &Direction) -> f64 {
    ga.dot(&Direction(gb.cross(gc)))
}

/// Angle between two lines, in degrees within [0, 90].
#[inline]
pub fn unoriented_angle(g1: &Direction, g2: &Direction) -> f64 {
    g1.cross(g2).norm().atan2(g1.dot(g2).abs()).to_degrees()
}
