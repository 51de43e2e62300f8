//! Small fixed-size vector helpers shared by every module.
//!
//! Positions and velocities are stored as `[f64; 3]` regardless of the
//! problem dimension; 2D problems keep the third component at zero and
//! carry their dimension alongside.

use serde::{Deserialize, Serialize};

/// A position or vector. Unused trailing components are zero.
pub type Point = [f64; 3];

pub const ORIGIN: Point = [0.0; 3];

#[inline]
pub fn add(a: &Point, b: &Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: &Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// `a + s * b`
#[inline]
pub fn axpy(a: &Point, s: f64, b: &Point) -> Point {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

#[inline]
pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn distance(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

pub fn is_finite(a: &Point) -> bool {
    a.iter().all(|c| c.is_finite())
}

/// Axis-aligned box in 2 or 3 dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Point,
    pub hi: Point,
    pub dims: usize,
}

impl Aabb {
    pub fn new(lo: Point, hi: Point, dims: usize) -> Self {
        Aabb { lo, hi, dims }
    }

    /// Checks `lo < hi` on every active axis and `dims` in {2, 3}.
    pub fn is_valid(&self) -> bool {
        (2..=3).contains(&self.dims) && (0..self.dims).all(|a| self.lo[a] < self.hi[a])
    }

    /// Closed containment on every active axis.
    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dims).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn center(&self) -> Point {
        let mut c = ORIGIN;
        for a in 0..self.dims {
            c[a] = 0.5 * (self.lo[a] + self.hi[a]);
        }
        c
    }
}
