//! Fixed-size 2D vectors, 2x2 matrices and velocity-space half-planes.

use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use crate::error::GeometryError;
use crate::math;

/// A point or direction in the plane. Used for positions (m) and
/// velocities (m/s) alike.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Signed area of the parallelogram spanned by `self` and `other`.
    #[inline]
    pub fn det(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn length(self) -> f64 {
        math::sqrt(self.length_squared())
    }

    #[inline]
    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).length()
    }

    #[inline]
    pub fn distance_squared(self, other: Vec2) -> f64 {
        (self - other).length_squared()
    }

    /// Counter-clockwise rotation by a quarter turn.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    #[inline]
    pub fn normalize(self) -> Option<Vec2> {
        let len = self.length();
        if len > 0.0 && len.is_finite() {
            Some(self / len)
        } else {
            None
        }
    }

    #[inline]
    /// `self` scaled down to length `max` when longer.
    pub fn clamp_length(self, max: f64) -> Vec2 {
        let len_sq = self.length_squared();
        if len_sq > max * max {
            self * (max / math::sqrt(len_sq))
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Mirror image across the x-axis.
    #[inline]
    pub fn reflect_x(self) -> Vec2 {
        Vec2::new(self.x, -self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    #[inline]
    fn mul(self, rhs: Vec2) -> Vec2 {
        rhs * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Row-major 2x2 matrix, mostly used as a covariance.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2 { m: [[0.0; 2]; 2] };
    pub const IDENTITY: Mat2 = Mat2 {
        m: [[1.0, 0.0], [0.0, 1.0]],
    };

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 {
            m: [[a, b], [c, d]],
        }
    }

    pub fn diagonal(a: f64, d: f64) -> Self {
        Mat2::new(a, 0.0, 0.0, d)
    }

    pub fn scaled_identity(s: f64) -> Self {
        Mat2::diagonal(s, s)
    }

    /// `a * b^T`.
    pub fn outer(a: Vec2, b: Vec2) -> Self {
        Mat2::new(a.x * b.x, a.x * b.y, a.y * b.x, a.y * b.y)
    }

    pub fn transpose(self) -> Self {
        Mat2::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    pub fn det(self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn inverse(self) -> Option<Mat2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let inv = 1.0 / det;
        Some(Mat2::new(
            self.m[1][1] * inv,
            -self.m[0][1] * inv,
            -self.m[1][0] * inv,
            self.m[0][0] * inv,
        ))
    }

    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y,
            self.m[1][0] * v.x + self.m[1][1] * v.y,
        )
    }

    pub fn matmul(self, o: Mat2) -> Mat2 {
        let a = &self.m;
        let b = &o.m;
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }

    pub fn scale(self, s: f64) -> Mat2 {
        Mat2::new(
            self.m[0][0] * s,
            self.m[0][1] * s,
            self.m[1][0] * s,
            self.m[1][1] * s,
        )
    }

    pub fn is_finite(self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    pub fn is_symmetric(self, tol: f64) -> bool {
        (self.m[0][1] - self.m[1][0]).abs() <= tol
    }

    /// Frobenius norm.
    pub fn norm(self) -> f64 {
        math::sqrt(self.m.iter().flatten().map(|v| v * v).sum())
    }

    /// Average of the matrix and its transpose.
    pub fn symmetrize(self) -> Mat2 {
        let off = 0.5 * (self.m[0][1] + self.m[1][0]);
        Mat2::new(self.m[0][0], off, off, self.m[1][1])
    }

    /// Eigen-decomposition of the symmetric part: `(values, vectors)` with
    /// values in ascending order and unit eigenvectors as columns.
    pub fn symmetric_eigen(self) -> ([f64; 2], [Vec2; 2]) {
        let s = self.symmetrize();
        let a = s.m[0][0];
        let b = s.m[0][1];
        let d = s.m[1][1];
        let half_trace = 0.5 * (a + d);
        let half_diff = 0.5 * (a - d);
        let radius = math::sqrt(half_diff * half_diff + b * b);
        let lo = half_trace - radius;
        let hi = half_trace + radius;
        if b == 0.0 {
            // Already diagonal.
            return if a <= d {
                ([a, d], [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)])
            } else {
                ([d, a], [Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0)])
            };
        }
        // (A - hi I) v = 0  =>  v = (b, hi - a)
        let v_hi = Vec2::new(b, hi - a)
            .normalize()
            .unwrap_or(Vec2::new(1.0, 0.0));
        let v_lo = v_hi.perp();
        ([lo, hi], [v_lo, v_hi])
    }

    /// Nearest positive semi-definite matrix in Frobenius norm: the
    /// symmetric part with negative eigenvalues clamped to zero.
    pub fn psd_projection(self) -> Mat2 {
        let ([l0, l1], [v0, v1]) = self.symmetric_eigen();
        let l0 = l0.max(0.0);
        let l1 = l1.max(0.0);
        (Mat2::outer(v0, v0).scale(l0) + Mat2::outer(v1, v1).scale(l1)).symmetrize()
    }

    /// Lower-triangular `L` with `L L^T = self` for a PSD matrix. Negative
    /// pivots from rounding are treated as zero.
    pub fn cholesky_psd(self) -> Mat2 {
        let s = self.symmetrize();
        let l00 = math::sqrt(s.m[0][0].max(0.0));
        let l10 = if l00 > 0.0 { s.m[1][0] / l00 } else { 0.0 };
        let l11 = math::sqrt((s.m[1][1] - l10 * l10).max(0.0));
        Mat2::new(l00, 0.0, l10, l11)
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.m[0][0] + o.m[0][0],
            self.m[0][1] + o.m[0][1],
            self.m[1][0] + o.m[1][0],
            self.m[1][1] + o.m[1][1],
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        self + o.scale(-1.0)
    }
}

/// One ORCA constraint: velocities `v` with `(v - point) . normal >= 0` are
/// permitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub point: Vec2,
    /// Unit normal pointing into the permitted side.
    pub normal: Vec2,
}

impl HalfPlane {
    /// Builds a half-plane, normalizing `normal`.
    pub fn new(point: Vec2, normal: Vec2) -> Result<Self, GeometryError> {
        if !point.is_finite() || !normal.is_finite() {
            return Err(GeometryError::NonFinite("HalfPlane::new"));
        }
        let normal = normal.normalize().ok_or(GeometryError::DegenerateNormal)?;
        Ok(HalfPlane { point, normal })
    }

    /// Signed violation `(point - v) . normal`; positive outside the
    /// permitted side.
    #[inline]
    pub fn violation(&self, v: Vec2) -> f64 {
        (self.point - v).dot(self.normal)
    }

    #[inline]
    pub fn permits(&self, v: Vec2) -> bool {
        (v - self.point).dot(self.normal) >= 0.0
    }

    /// Direction along the boundary line, with the permitted side on its
    /// left.
    #[inline]
    pub fn direction(&self) -> Vec2 {
        -self.normal.perp()
    }

    pub fn is_finite(&self) -> bool {
        self.point.is_finite() && self.normal.is_finite()
    }

    /// Mirror image across the x-axis.
    pub fn reflect_x(&self) -> HalfPlane {
        HalfPlane {
            point: self.point.reflect_x(),
            normal: self.normal.reflect_x(),
        }
    }
}
