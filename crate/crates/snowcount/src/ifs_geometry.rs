//! p-Koch iterated function systems, polygonal chains with certified
//! Hausdorff error, and the snowflake domains `K(p)` and `R(p)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::{polygon_area, segments_intersect, Aabb, Point};

/// Lower end of the admissible open interval for `p`.
pub const P_MIN: f64 = 0.25;

/// Upper end `(√3 − 1)/2` of the admissible open interval for `p`.
pub fn p_max() -> f64 {
    (3f64.sqrt() - 1.0) / 2.0
}

/// Default cap on the number of polygon vertices produced by refinement.
pub const DEFAULT_VERTEX_BUDGET: usize = 1 << 24;

/// A planar similarity `x ↦ translation + scale · R(rotation) · F x`, where
/// `F` is the reflection `(x, y) ↦ (x, −y)` when `reflect` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    /// Ratio of the similarity.
    pub scale: f64,
    /// Rotation angle in radians.
    pub rotation: f64,
    /// Whether the map reverses orientation.
    pub reflect: bool,
    /// Image of the origin.
    pub translation: Point,
}

impl Similarity {
    /// General similarity with positive finite scale.
    pub fn new(scale: f64, rotation: f64, reflect: bool, translation: Point) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Domain(format!("similarity scale must be positive, got {scale}")));
        }
        Ok(Similarity { scale, rotation, reflect, translation })
    }

    /// Contracting similarity, `scale ∈ (0, 1)`.
    pub fn contraction(scale: f64, rotation: f64, reflect: bool, translation: Point) -> Result<Self> {
        if !(scale > 0.0 && scale < 1.0) {
            return Err(Error::Domain(format!("contraction ratio must lie in (0,1), got {scale}")));
        }
        Similarity::new(scale, rotation, reflect, translation)
    }

    /// The identity map.
    pub fn identity() -> Self {
        Similarity { scale: 1.0, rotation: 0.0, reflect: false, translation: Point::default() }
    }

    /// The similarity sending `(0,0) ↦ a` and `(len,0) ↦ b`.
    ///
    /// With `reflect` the local upper half-plane is sent to the right of `a → b`.
    pub fn from_segment(a: Point, b: Point, len: f64, reflect: bool) -> Self {
        let d = b - a;
        Similarity { scale: d.norm() / len, rotation: d.angle(), reflect, translation: a }
    }

    /// Applies the linear part only.
    pub fn apply_linear(&self, v: Point) -> Point {
        let v = if self.reflect { Point::new(v.x, -v.y) } else { v };
        let (s, c) = self.rotation.sin_cos();
        Point::new(c * v.x - s * v.y, s * v.x + c * v.y) * self.scale
    }

    /// Applies the similarity to a point.
    pub fn apply(&self, v: Point) -> Point {
        self.translation + self.apply_linear(v)
    }

    /// The composition `self ∘ other`.
    pub fn compose(&self, other: &Similarity) -> Similarity {
        let rot = if self.reflect { self.rotation - other.rotation } else { self.rotation + other.rotation };
        Similarity {
            scale: self.scale * other.scale,
            rotation: rot,
            reflect: self.reflect ^ other.reflect,
            translation: self.apply(other.translation),
        }
    }

    /// The inverse map.
    pub fn inverse(&self) -> Similarity {
        let s = 1.0 / self.scale;
        let rot = if self.reflect { self.rotation } else { -self.rotation };
        let inv = Similarity { scale: s, rotation: rot, reflect: self.reflect, translation: Point::default() };
        let t = inv.apply_linear(self.translation);
        Similarity { translation: -t, ..inv }
    }
}

/// The four-map similarity system generating the p-Koch curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PKochSystem {
    /// Contraction ratio of every map.
    pub p: f64,
    /// The maps φ₁ … φ₄ in chain order.
    pub maps: [Similarity; 4],
    /// Minkowski dimension `log 4 / log(1/p)` of the limit curve.
    pub delta: f64,
}

/// Builds the p-Koch system for `p ∈ (1/4, (√3−1)/2)`.
pub fn make_p_koch(p: f64) -> Result<PKochSystem> {
    if !(p > P_MIN && p < p_max()) {
        return Err(Error::Domain(format!("p must lie in (1/4, (√3−1)/2), got {p}")));
    }
    let h = bump_height(p);
    let alpha = base_angle(p);
    let maps = [
        Similarity::contraction(p, 0.0, false, Point::new(0.0, 0.0))?,
        Similarity::contraction(p, alpha, false, Point::new(p, 0.0))?,
        Similarity::contraction(p, -alpha, false, Point::new(0.5, h))?,
        Similarity::contraction(p, 0.0, false, Point::new(1.0 - p, 0.0))?,
    ];
    Ok(PKochSystem { p, maps, delta: 4f64.ln() / (1.0 / p).ln() })
}

/// Apex height `√(4p−1)/2` of the first bump over the unit segment.
pub fn bump_height(p: f64) -> f64 {
    (4.0 * p - 1.0).sqrt() / 2.0
}

/// Base angle of the first bump triangle.
pub fn base_angle(p: f64) -> f64 {
    bump_height(p).atan2(0.5 - p)
}

/// Certified Hausdorff distance between the level-`m` chain on a unit
/// segment and the limit curve: `p^m √(4p−1) / (2(1−p))`.
pub fn hausdorff_error(p: f64, m: u32) -> f64 {
    p.powi(m as i32) * bump_height(p) / (1.0 - p)
}

/// Area enclosed between the unit segment and the limit curve over it.
pub fn unit_bump_area(p: f64) -> f64 {
    (1.0 - 2.0 * p) * bump_height(p) / (2.0 * (1.0 - 4.0 * p * p))
}

impl PKochSystem {
    /// Apex height of the first bump.
    pub fn bump_height(&self) -> f64 {
        bump_height(self.p)
    }

    /// Base angle of the first bump triangle.
    pub fn base_angle(&self) -> f64 {
        base_angle(self.p)
    }

    /// The composed map `φ_{w₁} ∘ … ∘ φ_{w_k}` for a word of indices in `0..4`.
    pub fn word_map(&self, word: &[usize]) -> Similarity {
        word.iter().fold(Similarity::identity(), |acc, &i| acc.compose(&self.maps[i]))
    }
}

/// An open polygonal chain approximating the limit curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyChain {
    /// Ordered vertices, all of which lie on the limit curve.
    pub vertices: Vec<Point>,
    /// Refinement level.
    pub level: u32,
    /// Certified Hausdorff distance to the limit curve.
    pub hausdorff_error: f64,
}

/// Refines the unit segment `level` times with the default vertex budget.
pub fn iterate_chain(sys: &PKochSystem, level: u32) -> Result<PolyChain> {
    iterate_chain_with_budget(sys, level, DEFAULT_VERTEX_BUDGET)
}

/// Refines the unit segment `level` times, failing if `4^level + 1` exceeds `budget`.
pub fn iterate_chain_with_budget(sys: &PKochSystem, level: u32, budget: usize) -> Result<PolyChain> {
    let count = vertex_count(level, 1)
        .filter(|&c| c <= budget)
        .ok_or_else(|| Error::Resource(format!("level {level} exceeds the vertex budget {budget}")))?;
    let mut v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)];
    for _ in 0..level {
        v = refine(&v, sys.p);
    }
    debug_assert_eq!(v.len(), count);
    Ok(PolyChain { vertices: v, level, hausdorff_error: hausdorff_error(sys.p, level) })
}

fn vertex_count(level: u32, sides: usize) -> Option<usize> {
    4usize.checked_pow(level)?.checked_mul(sides)?.checked_add(1)
}

/// One refinement step: every segment is replaced by its four images, with
/// bumps to the left of the direction of travel.
pub fn refine(v: &[Point], p: f64) -> Vec<Point> {
    let h = bump_height(p);
    let mut out = Vec::with_capacity(4 * (v.len() - 1) + 1);
    for w in v.windows(2) {
        let (a, b) = (w[0], w[1]);
        let d = b - a;
        out.push(a);
        out.push(a + d * p);
        out.push(a + d * 0.5 + d.perp() * h);
        out.push(a + d * (1.0 - p));
    }
    out.push(*v.last().expect("chain has at least one vertex"));
    out
}

/// The base polygon of a snowflake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainKind {
    /// Unit equilateral triangle, giving `K(p)`.
    TriangleK,
    /// Unit square, giving the Rohde-type snowflake `R(p)`.
    SquareR,
}

impl DomainKind {
    /// Number of sides of the base polygon.
    pub fn sides(self) -> usize {
        match self {
            DomainKind::TriangleK => 3,
            DomainKind::SquareR => 4,
        }
    }

    /// Area of the base polygon.
    pub fn base_area(self) -> f64 {
        match self {
            DomainKind::TriangleK => 3f64.sqrt() / 4.0,
            DomainKind::SquareR => 1.0,
        }
    }

    /// Counter-clockwise vertices of the base polygon.
    pub fn base_vertices(self) -> Vec<Point> {
        match self {
            DomainKind::TriangleK => vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(0.5, 3f64.sqrt() / 2.0),
            ],
            DomainKind::SquareR => vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0),
            ],
        }
    }

    /// Short label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            DomainKind::TriangleK => "K",
            DomainKind::SquareR => "R",
        }
    }
}

/// A snowflake domain at a finite polygonal level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnowflakeDomain {
    /// Base polygon.
    pub kind: DomainKind,
    /// IFS parameter.
    pub p: f64,
    /// One chain per side, counter-clockwise, bumps pointing outward.
    pub boundary: Vec<PolyChain>,
    /// Exact area of the limit domain.
    pub area_exact: f64,
    /// Refinement level of the chains.
    pub level: u32,
}

/// Exact area `base + sides·(1−2p)√(4p−1)/(4(1−4p²))` of `K(p)` or `R(p)`.
pub fn area_exact(kind: DomainKind, p: f64) -> f64 {
    kind.base_area() + kind.sides() as f64 * unit_bump_area(p)
}

/// Upper bound on `|area(level m) − area_exact|`.
pub fn area_error_bound(kind: DomainKind, p: f64, m: u32) -> f64 {
    kind.sides() as f64 * (1.0 - 2.0 * p) * (4.0 * p - 1.0).sqrt() / 4.0 * (4.0 * p * p).powi(m as i32)
        / (1.0 - 4.0 * p * p)
}

/// Builds `K(p)` or `R(p)` at the given level with the default vertex budget.
pub fn build_snowflake(kind: DomainKind, p: f64, level: u32) -> Result<SnowflakeDomain> {
    build_snowflake_with_budget(kind, p, level, DEFAULT_VERTEX_BUDGET)
}

/// Builds `K(p)` or `R(p)`, failing if the polygon would exceed `budget` vertices.
pub fn build_snowflake_with_budget(
    kind: DomainKind,
    p: f64,
    level: u32,
    budget: usize,
) -> Result<SnowflakeDomain> {
    let sys = make_p_koch(p)?;
    vertex_count(level, kind.sides())
        .filter(|&c| c <= budget)
        .ok_or_else(|| Error::Resource(format!("level {level} exceeds the vertex budget {budget}")))?;
    let unit = iterate_chain_with_budget(&sys, level, budget)?;
    let base = kind.base_vertices();
    let n = base.len();
    let boundary: Vec<PolyChain> = (0..n)
        .into_par_iter()
        .map(|i| {
            let map = side_map(&base, i);
            PolyChain {
                vertices: unit.vertices.iter().map(|&v| map.apply(v)).collect(),
                level,
                hausdorff_error: unit.hausdorff_error,
            }
        })
        .collect();
    let dom = SnowflakeDomain { kind, p, boundary, area_exact: area_exact(kind, p), level };
    dom.check_simple()?;
    Ok(dom)
}

fn side_map(base: &[Point], i: usize) -> Similarity {
    let a = base[i];
    let b = base[(i + 1) % base.len()];
    Similarity::from_segment(a, b, 1.0, true)
}

impl SnowflakeDomain {
    /// Certified Hausdorff distance between the polygon and the true boundary.
    pub fn hausdorff_error(&self) -> f64 {
        self.boundary.iter().map(|c| c.hausdorff_error).fold(0.0, f64::max)
    }

    /// Similarities sending the unit segment onto each side, bumps outward.
    pub fn side_maps(&self) -> Vec<Similarity> {
        let base = self.kind.base_vertices();
        (0..base.len()).map(|i| side_map(&base, i)).collect()
    }

    /// Closed counter-clockwise vertex ring (the first vertex is not repeated).
    pub fn polygon(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.boundary.iter().map(|c| c.vertices.len()).sum());
        for c in &self.boundary {
            out.extend_from_slice(&c.vertices[..c.vertices.len() - 1]);
        }
        out
    }

    /// Shoelace area of the polygon.
    pub fn polygon_area(&self) -> f64 {
        polygon_area(&self.polygon())
    }

    /// Bounding box of the limit domain (polygon box inflated by the error).
    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(&self.polygon()).inflate(self.hausdorff_error())
    }

    /// Upper bound on the diameter of the limit domain.
    ///
    /// Every polygon vertex lies on the limit curve, so the vertex diameter is
    /// a lower bound and adding twice the Hausdorff error gives an upper bound.
    pub fn diameter_upper(&self) -> f64 {
        self.vertex_diameter() + 2.0 * self.hausdorff_error()
    }

    /// Largest distance between two polygon vertices.
    pub fn vertex_diameter(&self) -> f64 {
        let hull = convex_hull(&self.polygon());
        let mut best: f64 = 0.0;
        for i in 0..hull.len() {
            for j in i + 1..hull.len() {
                best = best.max(hull[i].dist(hull[j]));
            }
        }
        best
    }

    /// Verifies that the closed polygon has no self-intersections.
    pub fn check_simple(&self) -> Result<()> {
        let v = self.polygon();
        match first_self_intersection(&v) {
            None => Ok(()),
            Some((i, j)) => Err(Error::Certification(format!(
                "boundary polygon self-intersects between segments {i} and {j}"
            ))),
        }
    }

    /// Writes the closed polygon as CSV lines `x,y`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "y"])?;
        for v in self.polygon() {
            wr.serialize((v.x, v.y))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// JSON object `{kind, p, level, hausdorff_error, vertices}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "p": self.p,
            "level": self.level,
            "hausdorff_error": self.hausdorff_error(),
            "vertices": self.polygon(),
        })
    }
}

/// Convex hull (counter-clockwise, monotone chain).
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && (lower[lower.len() - 1] - lower[lower.len() - 2]).cross(p - lower[lower.len() - 2]) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && (upper[upper.len() - 1] - upper[upper.len() - 2]).cross(p - upper[upper.len() - 2]) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Finds a pair of non-adjacent intersecting segments of a closed ring, using
/// a uniform grid sized to the mean segment length.
pub fn first_self_intersection(v: &[Point]) -> Option<(usize, usize)> {
    let n = v.len();
    if n < 4 {
        return None;
    }
    let seg = |i: usize| (v[i], v[(i + 1) % n]);
    let total: f64 = (0..n).map(|i| seg(i).0.dist(seg(i).1)).sum();
    let cell = 2.0 * total / n as f64;
    let bb = Aabb::from_points(v);
    let key = |x: f64, y: f64| -> (i64, i64) {
        (((x - bb.min.x) / cell).floor() as i64, ((y - bb.min.y) / cell).floor() as i64)
    };
    let mut entries: Vec<((i64, i64), u32)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (a, b) = seg(i);
            let (x0, y0) = key(a.x.min(b.x), a.y.min(b.y));
            let (x1, y1) = key(a.x.max(b.x), a.y.max(b.y));
            (x0..=x1).flat_map(move |x| (y0..=y1).map(move |y| ((x, y), i as u32)))
        })
        .collect();
    entries.par_sort_unstable();
    let groups: Vec<&[((i64, i64), u32)]> = entries.chunk_by(|a, b| a.0 == b.0).collect();
    groups.par_iter().find_map_any(|g| {
        for x in 0..g.len() {
            for y in x + 1..g.len() {
                let (i, j) = (g[x].1 as usize, g[y].1 as usize);
                let gap = i.abs_diff(j);
                if gap <= 1 || gap == n - 1 {
                    continue;
                }
                let (a, b) = seg(i);
                let (c, d) = seg(j);
                if segments_intersect(a, b, c, d) {
                    return Some((i.min(j), i.max(j)));
                }
            }
        }
        None
    })
}
