//! Planar points, axis-aligned boxes and segment primitives.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point or vector in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    /// First coordinate.
    pub x: f64,
    /// Second coordinate.
    pub y: f64,
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Point {
    /// Creates a point from its coordinates.
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// Dot product.
    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// Scalar cross product `self × o`.
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    /// Euclidean norm.
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Squared Euclidean norm.
    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    /// Distance to another point.
    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    /// The vector rotated by +90 degrees (points to the left of `self`).
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    /// Polar angle in radians.
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Linear interpolation `self + t (o − self)`.
    pub fn lerp(self, o: Point, t: f64) -> Point {
        self + (o - self) * t
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    /// Lower-left corner.
    pub min: Point,
    /// Upper-right corner.
    pub max: Point,
}

impl Aabb {
    /// The empty box (inverted bounds), neutral for [`Aabb::grow`].
    pub const EMPTY: Aabb = Aabb {
        min: Point::new(f64::INFINITY, f64::INFINITY),
        max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
    };

    /// Box spanned by two corners.
    pub fn new(min: Point, max: Point) -> Self {
        Aabb { min, max }
    }

    /// Smallest box containing all points.
    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut b = Aabb::EMPTY;
        for p in pts {
            b.grow(*p);
        }
        b
    }

    /// Enlarges the box to contain `p`.
    pub fn grow(&mut self, p: Point) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    /// Union of two boxes.
    pub fn union(self, o: Aabb) -> Aabb {
        Aabb::new(
            Point::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y)),
            Point::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y)),
        )
    }

    /// Box enlarged by `r` on every side.
    pub fn inflate(self, r: f64) -> Aabb {
        Aabb::new(self.min - Point::new(r, r), self.max + Point::new(r, r))
    }

    /// Width and height.
    pub fn extent(self) -> Point {
        self.max - self.min
    }

    /// Center point.
    pub fn center(self) -> Point {
        (self.min + self.max) * 0.5
    }

    /// Length of the diagonal.
    pub fn diagonal(self) -> f64 {
        self.extent().norm()
    }

    /// Whether `p` lies in the closed box.
    pub fn contains(self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Euclidean distance from `p` to the box (0 inside).
    pub fn dist_to_point(self, p: Point) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }

    /// Euclidean distance between two boxes (0 if they intersect).
    pub fn dist_to_box(self, o: Aabb) -> f64 {
        let dx = (self.min.x - o.max.x).max(0.0).max(o.min.x - self.max.x);
        let dy = (self.min.y - o.max.y).max(0.0).max(o.min.y - self.max.y);
        dx.hypot(dy)
    }

    /// Largest distance from `p` to a point of the box.
    pub fn max_dist_to_point(self, p: Point) -> f64 {
        let dx = (p.x - self.min.x).abs().max((self.max.x - p.x).abs());
        let dy = (p.y - self.min.y).abs().max((self.max.y - p.y).abs());
        dx.hypot(dy)
    }
}

/// Closest point parameter `t ∈ [0,1]` and distance from `p` to segment `a b`.
pub fn point_segment(p: Point, a: Point, b: Point) -> (f64, f64) {
    let d = b - a;
    let l2 = d.norm2();
    let t = if l2 > 0.0 {
        ((p - a).dot(d) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (t, (a + d * t).dist(p))
}

/// Whether closed segments `a b` and `c d` intersect.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Distance between segment `a b` and a closed box (0 if they meet).
pub fn segment_box(a: Point, b: Point, bx: Aabb) -> f64 {
    if bx.contains(a) || bx.contains(b) {
        return 0.0;
    }
    let c = [
        bx.min,
        Point::new(bx.max.x, bx.min.y),
        bx.max,
        Point::new(bx.min.x, bx.max.y),
    ];
    for i in 0..4 {
        if segments_intersect(a, b, c[i], c[(i + 1) % 4]) {
            return 0.0;
        }
    }
    let mut best = bx.dist_to_point(a).min(bx.dist_to_point(b));
    for corner in c {
        best = best.min(point_segment(corner, a, b).1);
    }
    best
}

/// Signed area of a closed polygon (positive when counter-clockwise).
pub fn polygon_area(v: &[Point]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        s += v[i].cross(v[(i + 1) % n]);
    }
    0.5 * s
}

/// Even-odd point-in-polygon test for a closed vertex ring.
pub fn point_in_polygon(v: &[Point], p: Point) -> bool {
    let n = v.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (v[i], v[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}
