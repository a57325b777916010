//! Points, vectors and axis-aligned boxes in three dimensions.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Point3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Point3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_f64(p: [f64; 3]) -> Self {
        Self::new(T::of(p[0]), T::of(p[1]), T::of(p[2]))
    }

    /// Unit vector along coordinate axis `axis` (0, 1 or 2).
    pub fn axis(axis: usize) -> Self {
        let mut p = Self::zero();
        p[axis] = T::one();
        p
    }

    pub fn to_f64(self) -> [f64; 3] {
        [
            self.x.to_f64_lossy(),
            self.y.to_f64_lossy(),
            self.z.to_f64_lossy(),
        ]
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    /// Returns the unit vector, or `None` for a zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            Some(self * (T::one() / n))
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn lerp(self, o: Self, t: T) -> Self {
        self + (o - self) * t
    }

    pub fn min_by_component(self, o: Self) -> Self {
        Self::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_by_component(self, o: Self) -> Self {
        Self::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    /// Arithmetic mean of a non-empty point set.
    pub fn mean(points: &[Self]) -> Self {
        let mut acc = Self::zero();
        for &p in points {
            acc = acc + p;
        }
        acc * (T::one() / T::from_count(points.len()))
    }
}

impl<T> std::ops::Index<usize> for Point3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("axis index {i} out of range"),
        }
    }
}

impl<T> std::ops::IndexMut<usize> for Point3<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("axis index {i} out of range"),
        }
    }
}

impl<T: Scalar> Add for Point3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Scalar> Sub for Point3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Scalar> Mul<T> for Point3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Scalar> Neg for Point3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Aabb<T> {
    pub min: Point3<T>,
    pub max: Point3<T>,
}

impl<T: Scalar> Aabb<T> {
    pub fn new(min: Point3<T>, max: Point3<T>) -> Self {
        Self { min, max }
    }

    pub fn from_f64(min: [f64; 3], max: [f64; 3]) -> Self {
        Self::new(Point3::from_f64(min), Point3::from_f64(max))
    }

    pub fn extent(&self) -> Point3<T> {
        self.max - self.min
    }

    pub fn diagonal(&self) -> T {
        self.extent().norm()
    }

    pub fn volume(&self) -> T {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn center(&self) -> Point3<T> {
        (self.min + self.max) * T::of(0.5)
    }

    /// Membership with slack `tol` on every side.
    pub fn contains(&self, p: Point3<T>, tol: T) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] - tol && p[a] <= self.max[a] + tol)
    }

    /// Strict interior membership (open box).
    pub fn contains_open(&self, p: Point3<T>) -> bool {
        (0..3).all(|a| p[a] > self.min[a] && p[a] < self.max[a])
    }

    /// Whether `p` lies on the box surface within `tol`.
    pub fn on_boundary(&self, p: Point3<T>, tol: T) -> bool {
        self.contains(p, tol)
            && (0..3)
                .any(|a| (p[a] - self.min[a]).abs() <= tol || (p[a] - self.max[a]).abs() <= tol)
    }

    pub fn bounding(points: impl IntoIterator<Item = Point3<T>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (mut lo, mut hi) = (first, first);
        for p in it {
            lo = lo.min_by_component(p);
            hi = hi.max_by_component(p);
        }
        Some(Self::new(lo, hi))
    }
}

/// Area vector (normal times area) and centroid of a planar polygon.
///
/// The polygon is fan-triangulated from its first vertex, which is exact for
/// planar convex polygons.
pub fn polygon_area_centroid<T: Scalar>(vertices: &[Point3<T>]) -> (Point3<T>, Point3<T>) {
    let half = T::of(0.5);
    let third = T::one() / T::of(3.0);
    let mut area_vec = Point3::zero();
    let mut weighted = Point3::zero();
    let mut total = T::zero();
    let a = vertices[0];
    for w in vertices[1..].windows(2) {
        let (b, c) = (w[0], w[1]);
        let cr = (b - a).cross(c - a) * half;
        let tri_area = cr.norm();
        area_vec = area_vec + cr;
        weighted = weighted + (a + b + c) * (third * tri_area);
        total += tri_area;
    }
    let centroid = if total > T::zero() {
        weighted * (T::one() / total)
    } else {
        Point3::mean(vertices)
    };
    (area_vec, centroid)
}

/// Volume and centroid of a polyhedron with planar faces, each face given as
/// a vertex loop. Faces are split into tetrahedra against the vertex mean,
/// so orientation of the loops does not matter for convex cells.
pub fn polyhedron_volume_centroid<T: Scalar>(
    vertices: &[Point3<T>],
    faces: &[&[usize]],
) -> (T, Point3<T>) {
    let apex = Point3::mean(vertices);
    let sixth = T::one() / T::of(6.0);
    let quarter = T::of(0.25);
    let mut volume = T::zero();
    let mut weighted = Point3::zero();
    for face in faces {
        let a = vertices[face[0]];
        for w in face[1..].windows(2) {
            let (b, c) = (vertices[w[0]], vertices[w[1]]);
            let v = ((b - a).cross(c - a)).dot(apex - a).abs() * sixth;
            volume += v;
            weighted = weighted + (a + b + c + apex) * (quarter * v);
        }
    }
    (volume, weighted * (T::one() / volume))
}

pub fn tetrahedron_volume<T: Scalar>(p: [Point3<T>; 4]) -> T {
    ((p[1] - p[0]).cross(p[2] - p[0])).dot(p[3] - p[0]).abs() / T::of(6.0)
}
