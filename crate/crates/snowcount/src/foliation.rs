//! Foliations of the covering domains: fibres traced through the IFS with
//! piecewise-constant density `β`, the fR/sR/lR covers of `Ω₋ε`, and the
//! well-covered certificate.
//!
//! Elements live in a local frame scaled by `p^k`: the base segment runs along
//! the `x`-axis from the origin, the fractal top lies in `y > 0` and the base
//! box `E` is `[0, W] × [−ε̂, 0]` with `ε̂ = ε/p^k`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{cover_constant, is_classic, ConstantRanges, Range};
use crate::distance::DomainDistance;
use crate::error::{Error, Result};
use crate::ifs_geometry::{
    base_angle, build_snowflake, bump_height, convex_hull, hausdorff_error, iterate_chain, make_p_koch, unit_bump_area,
    DomainKind, PKochSystem, Similarity, SnowflakeDomain,
};
use crate::point::{point_in_polygon, polygon_area, Aabb, Point};

/// Default number of IFS recursion steps when tracing fibres.
pub const DEFAULT_FIBER_DEPTH: usize = 70;

/// Chain level of the element polygons used for membership tests.
const MEMBERSHIP_LEVEL: u32 = 4;

/// Shape of a covering domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElementKind {
    /// Rectangle under the chord of an apex, topped by the bump triangle and two fractal sides.
    FringedRect,
    /// Rectangle under one segment with a fractal top.
    ShortRect,
    /// Short rectangle extended by `ε sin α` past a reflex vertex.
    LongRect,
}

impl ElementKind {
    /// Short label.
    pub fn label(self) -> &'static str {
        match self {
            ElementKind::FringedRect => "fR",
            ElementKind::ShortRect => "sR",
            ElementKind::LongRect => "lR",
        }
    }
}

/// `cot α = (1−2p)/√(4p−1)`.
pub fn cot_alpha(p: f64) -> f64 {
    (1.0 - 2.0 * p) / (4.0 * p - 1.0).sqrt()
}

/// The scale interval `J_k = (p^{k+1} cot α, p^k cot α]`.
pub fn j_interval(p: f64, k: u32) -> (f64, f64) {
    let c = cot_alpha(p);
    (p.powi(k as i32 + 1) * c, p.powi(k as i32) * c)
}

/// The `k ≥ 1` with `ε ∈ J_k`.
pub fn scale_index(p: f64, eps: f64) -> Result<u32> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("epsilon must be positive, got {eps}")));
    }
    let x = (eps / cot_alpha(p)).ln() / p.ln();
    let mut k = x.floor().max(0.0) as i64;
    while k > 0 && eps > j_interval(p, k as u32).1 {
        k -= 1;
    }
    while eps <= j_interval(p, k as u32).0 {
        k += 1;
    }
    if k < 1 || eps > j_interval(p, k as u32).1 {
        return Err(Error::Precondition(format!(
            "ε = {eps} exceeds sup J_1 = {}; no generation-k cover with k ≥ 1",
            j_interval(p, 1).1
        )));
    }
    Ok(k as u32)
}

/// Density `b/a` of the affine band map sending a base of length `a` onto a side of length `b`.
pub fn seed_triangle_density(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!("sides must be positive, got a={a}, b={b}")));
    }
    Ok(b / a)
}

/// `β` multiplier `2p/(1−2p)` when a fibre enters a bump side.
pub fn band_ratio(p: f64) -> f64 {
    2.0 * p / (1.0 - 2.0 * p)
}

/// A knot of a fibre polyline; `beta` is the density on the segment leaving it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberKnot {
    /// Position in the element frame.
    pub point: Point,
    /// Density on the following segment.
    pub beta: f64,
}

/// A fibre from the bottom of `E` towards the fractal boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fiber {
    /// Starting point at the bottom of `E`.
    pub start: Point,
    /// Polyline knots, starting with `start`.
    pub knots: Vec<FiberKnot>,
    /// Arclength.
    pub length: f64,
    /// `∫ β dt`, an exact band sum.
    pub integral: f64,
    /// Depth of the `E` segment.
    pub r: f64,
}

impl Fiber {
    /// The band densities in order.
    pub fn betas(&self) -> Vec<f64> {
        self.knots[..self.knots.len().saturating_sub(1)].iter().map(|k| k.beta).collect()
    }

    /// Endpoint of the fibre.
    pub fn end(&self) -> Point {
        self.knots.last().map(|k| k.point).unwrap_or(self.start)
    }
}

struct Tracer {
    p: f64,
    h: f64,
    maps: [Similarity; 4],
}

impl Tracer {
    fn new(sys: &PKochSystem) -> Self {
        Tracer { p: sys.p, h: bump_height(sys.p), maps: sys.maps }
    }

    /// Follows the fibre at parameter `u` of the unit segment under `frame`.
    ///
    /// Junctions take the left limit; a fibre landing exactly on an endpoint
    /// of the current segment has reached the curve and stops.
    fn trace(&self, mut frame: Similarity, mut u: f64, mut beta: f64, depth: usize, out: &mut Vec<FiberKnot>) {
        let (p, h) = (self.p, self.h);
        let ratio = band_ratio(p);
        for _ in 0..depth {
            if u <= 0.0 || u >= 1.0 {
                break;
            }
            if u <= p {
                frame = frame.compose(&self.maps[0]);
                u /= p;
            } else if u <= 0.5 {
                let f = (u - p) / (0.5 - p);
                out.push(FiberKnot { point: frame.apply(Point::new(u, f * h)), beta: beta * ratio });
                frame = frame.compose(&self.maps[1]);
                u = f;
                beta *= ratio;
            } else if u <= 1.0 - p {
                let g = (u - 0.5) / (0.5 - p);
                out.push(FiberKnot { point: frame.apply(Point::new(u, (1.0 - g) * h)), beta: beta * ratio });
                frame = frame.compose(&self.maps[2]);
                u = g;
                beta *= ratio;
            } else {
                frame = frame.compose(&self.maps[3]);
                u = (u - (1.0 - p)) / p;
            }
        }
        let end = frame.apply(Point::new(u, 0.0));
        if out.last().is_none_or(|k| k.point.dist(end) > 0.0) {
            out.push(FiberKnot { point: end, beta });
        }
    }

    /// `(length, ∫β)` of the trace from `u` on a unit segment, without storing knots.
    fn measure(&self, mut u: f64, depth: usize) -> (f64, f64) {
        let (p, h) = (self.p, self.h);
        let ratio = band_ratio(p);
        let (mut scale, mut beta, mut len, mut int) = (1.0, 1.0, 0.0, 0.0);
        for _ in 0..depth {
            if u <= 0.0 || u >= 1.0 {
                break;
            }
            if u <= p {
                u /= p;
            } else if u <= 0.5 {
                let f = (u - p) / (0.5 - p);
                len += f * h * scale;
                int += beta * f * h * scale;
                u = f;
                beta *= ratio;
            } else if u <= 1.0 - p {
                let g = (u - 0.5) / (0.5 - p);
                len += (1.0 - g) * h * scale;
                int += beta * (1.0 - g) * h * scale;
                u = g;
                beta *= ratio;
            } else {
                u = (u - (1.0 - p)) / p;
            }
            scale *= p;
        }
        (len, int)
    }
}

/// Local base width `W` of an element (in units of `p^k`).
pub fn local_width(p: f64, kind: ElementKind, eps_hat: f64) -> f64 {
    match kind {
        ElementKind::ShortRect => 1.0,
        ElementKind::LongRect => 1.0 + eps_hat * base_angle(p).sin(),
        ElementKind::FringedRect => (1.0 - 2.0 * p) / p,
    }
}

/// Apex of the fR bump triangle in the local frame: `(W̃/2, h/p)`.
pub fn fringe_apex(p: f64) -> Point {
    Point::new((1.0 - 2.0 * p) / (2.0 * p), bump_height(p) / p)
}

fn polyline_length(knots: &[FiberKnot]) -> (f64, f64) {
    knots.windows(2).fold((0.0, 0.0), |(l, i), w| {
        let d = w[0].point.dist(w[1].point);
        (l + d, i + w[0].beta * d)
    })
}

/// Traces the fibre at normalised base position `q ∈ (0,1)` of an element with
/// local depth `eps_hat`, through `depth` IFS recursion steps.
pub fn trace_fiber(sys: &PKochSystem, kind: ElementKind, q: f64, depth: usize, eps_hat: f64) -> Result<Fiber> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("fibre parameter must lie in (0,1), got {q}")));
    }
    if depth == 0 || !(eps_hat > 0.0) {
        return Err(Error::Precondition("depth ≥ 1 and a positive depth of E are required".into()));
    }
    let p = sys.p;
    let tr = Tracer::new(sys);
    let w = local_width(p, kind, eps_hat);
    let x = q * w;
    let start = Point::new(x, -eps_hat);
    let mut knots = vec![FiberKnot { point: start, beta: 1.0 }];
    match kind {
        ElementKind::ShortRect | ElementKind::LongRect => {
            if x >= 1.0 {
                knots.push(FiberKnot { point: Point::new(x, 0.0), beta: 1.0 });
            } else {
                knots.push(FiberKnot { point: Point::new(x, 0.0), beta: 1.0 });
                tr.trace(Similarity::identity(), x, 1.0, depth, &mut knots);
            }
        }
        ElementKind::FringedRect => {
            let apex = fringe_apex(p);
            let half = 0.5 * w;
            let tan_a = apex.y / half;
            knots.push(FiberKnot { point: Point::new(x, 0.0), beta: 1.0 });
            let ratio = band_ratio(p);
            let (side, u, y) = if x <= half {
                (Similarity::from_segment(Point::new(0.0, 0.0), apex, 1.0, false), x / half, x * tan_a)
            } else {
                (Similarity::from_segment(apex, Point::new(w, 0.0), 1.0, false), (x - half) / half, (w - x) * tan_a)
            };
            knots.push(FiberKnot { point: Point::new(x, y), beta: ratio });
            tr.trace(side, u, ratio, depth, &mut knots);
        }
    }
    dedup_knots(&mut knots);
    let (length, integral) = polyline_length(&knots);
    Ok(Fiber { start, knots, length, integral, r: eps_hat })
}

fn dedup_knots(knots: &mut Vec<FiberKnot>) {
    let mut out: Vec<FiberKnot> = Vec::with_capacity(knots.len());
    for k in knots.drain(..) {
        match out.last_mut() {
            Some(last) if last.point.dist(k.point) == 0.0 => last.beta = k.beta,
            _ => out.push(k),
        }
    }
    *knots = out;
}

/// Supremum over fibres of `(length, ∫β)` of the fractal top in local units, from the geometric series.
pub fn top_sup(p: f64, kind: ElementKind) -> (f64, f64) {
    let h = bump_height(p);
    let len = h / (1.0 - p);
    let int = h * (1.0 - 2.0 * p) / (1.0 - 2.0 * p - 2.0 * p * p);
    match kind {
        ElementKind::FringedRect => (len / p, int / p),
        _ => (len, int),
    }
}

/// Area of the fractal top in local units.
pub fn top_area(p: f64, kind: ElementKind) -> f64 {
    let a = unit_bump_area(p);
    match kind {
        ElementKind::FringedRect => {
            let apex = fringe_apex(p);
            apex.x * apex.y + 2.0 * a
        }
        _ => a,
    }
}

/// Closed element polygon in local coordinates with fractal top at chain level `level`.
pub fn local_polygon(sys: &PKochSystem, kind: ElementKind, eps_hat: f64, level: u32) -> Result<Vec<Point>> {
    let chain = iterate_chain(sys, level)?.vertices;
    let p = sys.p;
    let w = local_width(p, kind, eps_hat);
    let mut poly = vec![Point::new(0.0, -eps_hat), Point::new(w, -eps_hat), Point::new(w, 0.0)];
    match kind {
        ElementKind::ShortRect => poly.extend(chain.iter().rev().skip(1)),
        ElementKind::LongRect => poly.extend(chain.iter().rev()),
        ElementKind::FringedRect => {
            let apex = fringe_apex(p);
            let left = Similarity::from_segment(Point::new(0.0, 0.0), apex, 1.0, false);
            let right = Similarity::from_segment(apex, Point::new(w, 0.0), 1.0, false);
            poly.extend(chain.iter().rev().skip(1).map(|&v| right.apply(v)));
            poly.extend(chain.iter().rev().skip(1).map(|&v| left.apply(v)));
        }
    }
    if poly.last().is_some_and(|v| v.dist(Point::new(0.0, 0.0)) < 1e-15) {
        poly.pop();
        poly.push(Point::new(0.0, 0.0));
    }
    Ok(poly)
}

/// Upper bound on the local diameter: hull diameter of the level-`level` polygon plus twice the chain error.
pub fn local_diameter(sys: &PKochSystem, kind: ElementKind, eps_hat: f64, level: u32) -> Result<f64> {
    let hull = convex_hull(&local_polygon(sys, kind, eps_hat, level)?);
    let mut d: f64 = 0.0;
    for i in 0..hull.len() {
        for j in i + 1..hull.len() {
            d = d.max(hull[i].dist(hull[j]));
        }
    }
    Ok(d + 2.0 * hausdorff_error(sys.p, level))
}

/// One covering domain with its foliation constants (absolute units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverElement {
    /// Shape.
    pub kind: ElementKind,
    /// Generation.
    pub k: u32,
    /// Tube width.
    pub epsilon: f64,
    /// Local-to-world map with scale `p^k`.
    pub placement: Similarity,
    /// Base width of `E`.
    pub width: f64,
    /// Depth of `E`.
    pub r: f64,
    /// Supremum of fibre lengths.
    pub l: f64,
    /// Supremum of `∫β` over fibres.
    pub i_beta: f64,
    /// Upper bound on the diameter.
    pub diam: f64,
    /// Exact area.
    pub vol: f64,
    /// Infimum of `β`.
    pub beta_inf: f64,
    /// `λ₂^N(E) = π²/max(width, ε)²`.
    pub lambda2_e: f64,
}

impl CoverElement {
    /// `ε/p^k`.
    pub fn eps_hat(&self) -> f64 {
        self.epsilon / self.placement.scale
    }

    /// Polygon in world coordinates at chain level `level`.
    pub fn polygon(&self, sys: &PKochSystem, level: u32) -> Result<Vec<Point>> {
        Ok(local_polygon(sys, self.kind, self.eps_hat(), level)?.into_iter().map(|v| self.placement.apply(v)).collect())
    }

    /// The Lemma eigenvalue lower bound for this element at a given `α`.
    pub fn eigen_lower_bound(&self, alpha: f64) -> f64 {
        crate::constants::lemma_bound(self.lambda2_e, self.r, self.l, self.i_beta, self.beta_inf, self.beta_inf, alpha)
    }
}

#[derive(Debug, Clone, Copy)]
struct KindGeometry {
    width: f64,
    diam: f64,
    vol: f64,
    l: f64,
    i_beta: f64,
}

fn kind_geometry(sys: &PKochSystem, kind: ElementKind, eps_hat: f64, level: u32) -> Result<KindGeometry> {
    let p = sys.p;
    let w = local_width(p, kind, eps_hat);
    let (tl, ti) = top_sup(p, kind);
    Ok(KindGeometry {
        width: w,
        diam: local_diameter(sys, kind, eps_hat, level)?,
        vol: w * eps_hat + top_area(p, kind),
        l: eps_hat + tl,
        i_beta: eps_hat + ti,
    })
}

/// Builds a single element of the given kind at generation `k` placed by `placement`.
pub fn make_element(sys: &PKochSystem, kind: ElementKind, k: u32, eps: f64, placement: Similarity) -> Result<CoverElement> {
    let s = placement.scale;
    let g = kind_geometry(sys, kind, eps / s, 6)?;
    Ok(element_from(kind, k, eps, placement, &g))
}

fn element_from(kind: ElementKind, k: u32, eps: f64, placement: Similarity, g: &KindGeometry) -> CoverElement {
    let s = placement.scale;
    let width = g.width * s;
    CoverElement {
        kind,
        k,
        epsilon: eps,
        placement,
        width,
        r: eps,
        l: g.l * s,
        i_beta: g.i_beta * s,
        diam: g.diam * s,
        vol: g.vol * s * s,
        beta_inf: 1.0,
        lambda2_e: PI * PI / width.max(eps).powi(2),
    }
}

/// Well-covered certificate of `Ω₋ε` for one `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellCoveredCertificate {
    /// Domain family.
    pub domain: DomainKind,
    /// IFS parameter.
    pub p: f64,
    /// Tube width.
    pub epsilon: f64,
    /// Generation with `ε ∈ J_k`.
    pub k: u32,
    /// The elements.
    pub elements: Vec<CoverElement>,
    /// Multiplicity of the construction.
    pub multiplicity: u32,
    /// Number of elements.
    pub cardinality: usize,
    /// Count per kind label.
    pub counts: BTreeMap<String, usize>,
    /// `C(Ω)`.
    pub c_of_omega: f64,
    /// `C(Ω) ε^{−δ}`.
    pub cardinality_bound: f64,
    /// Ratio ranges measured on the elements at this `ε`.
    pub constant_ranges: ConstantRanges,
    /// Infimum of `β` over elements.
    pub beta_inf: f64,
}

impl WellCoveredCertificate {
    /// Certificate JSON `{epsilon, k, counts, constant_ranges, C_of_Omega, multiplicity, ...}`.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "domain": self.domain,
            "p": self.p,
            "epsilon": self.epsilon,
            "k": self.k,
            "counts": self.counts,
            "cardinality": self.cardinality,
            "cardinality_bound": self.cardinality_bound,
            "constant_ranges": self.constant_ranges,
            "C_of_Omega": self.c_of_omega,
            "multiplicity": self.multiplicity,
            "beta_inf": self.beta_inf,
        })
    }
}

/// Cardinality `2·4^k − 2` for `K(1/3)` and `(4/3)(2·4^k+1)` for `R(p)`.
pub fn expected_cardinality(kind: DomainKind, p: f64, k: u32) -> Option<u64> {
    let f = 4u64.checked_pow(k)?;
    match kind {
        DomainKind::TriangleK if is_classic(p) => Some(2 * f - 2),
        DomainKind::TriangleK => None,
        DomainKind::SquareR => Some(4 * (2 * f + 1) / 3),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Vertex {
    Apex,
    Reflex,
    Corner,
}

/// Builds the fR/sR/lR cover of `Ω₋ε`.
///
/// The level-`k` polygon is walked counter-clockwise: each vertex turning left
/// by `2α` yields an fR over its two segments; every other segment yields an
/// sR, or an lR when the following segment is also uncovered and the vertex
/// between them is reflex.
pub fn build_cover(domain: &SnowflakeDomain, eps: f64) -> Result<WellCoveredCertificate> {
    let p = domain.p;
    let sys = make_p_koch(p)?;
    let k = scale_index(p, eps)?;
    if domain.kind == DomainKind::TriangleK && !is_classic(p) {
        return Err(Error::Unsupported(format!(
            "covers of K(p) are constructed only for p = 1/3 (got p = {p}); the triangle corners are not bump apexes"
        )));
    }
    if domain.level < k {
        return Err(Error::Precondition(format!(
            "ε ∈ J_{k} needs a polygon of level ≥ {k}, domain has level {}",
            domain.level
        )));
    }
    let poly = build_snowflake(domain.kind, p, k)?.polygon();
    let n = poly.len();
    let alpha = base_angle(p);
    let dir = |i: usize| poly[(i + 1) % n] - poly[i];
    let kinds: Vec<Vertex> = (0..n)
        .map(|i| {
            let a = dir((i + n - 1) % n);
            let b = dir(i);
            let turn = a.cross(b).atan2(a.dot(b));
            if (turn - 2.0 * alpha).abs() < 1e-6 {
                Ok(Vertex::Apex)
            } else if (turn + alpha).abs() < 1e-6 {
                Ok(Vertex::Reflex)
            } else if (turn - PI / 2.0).abs() < 1e-6 {
                Ok(Vertex::Corner)
            } else {
                Err(Error::Degenerate(format!("vertex {i} turns by {turn} rad, matching no element rule")))
            }
        })
        .collect::<Result<_>>()?;
    let eps_hat = eps / p.powi(k as i32);
    let geo: BTreeMap<ElementKind, KindGeometry> = [ElementKind::FringedRect, ElementKind::ShortRect, ElementKind::LongRect]
        .into_iter()
        .map(|kd| Ok((kd, kind_geometry(&sys, kd, eps_hat, 6)?)))
        .collect::<Result<_>>()?;
    let mut used = vec![false; n];
    let mut elements = Vec::new();
    for i in 0..n {
        if kinds[i] == Vertex::Apex {
            let (a, c) = (poly[(i + n - 1) % n], poly[(i + 1) % n]);
            used[(i + n - 1) % n] = true;
            used[i] = true;
            let w = geo[&ElementKind::FringedRect].width;
            let pl = Similarity::from_segment(a, c, w, true);
            elements.push(element_from(ElementKind::FringedRect, k, eps, pl, &geo[&ElementKind::FringedRect]));
        }
    }
    for j in 0..n {
        if used[j] {
            continue;
        }
        let next = (j + 1) % n;
        let kind = if !used[next] && kinds[next] == Vertex::Reflex { ElementKind::LongRect } else { ElementKind::ShortRect };
        let pl = Similarity::from_segment(poly[j], poly[next], 1.0, true);
        elements.push(element_from(kind, k, eps, pl, &geo[&kind]));
    }
    let mut counts = BTreeMap::new();
    for e in &elements {
        *counts.entry(e.kind.label().to_string()).or_insert(0usize) += 1;
    }
    let c = cover_constant(domain.kind, p);
    let ranges = measured_ranges(&elements, eps);
    Ok(WellCoveredCertificate {
        domain: domain.kind,
        p,
        epsilon: eps,
        k,
        cardinality: elements.len(),
        elements,
        multiplicity: 2,
        counts,
        c_of_omega: c,
        cardinality_bound: c * eps.powf(-sys.delta),
        constant_ranges: ranges,
        beta_inf: 1.0,
    })
}

fn measured_ranges(elements: &[CoverElement], eps: f64) -> ConstantRanges {
    let range = |f: &dyn Fn(&CoverElement) -> f64| {
        let (lo, hi) = elements.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        Range::new(lo, hi)
    };
    ConstantRanges {
        c_r: range(&|e| e.r / eps),
        c_l: range(&|e| e.l / eps),
        c_i: range(&|e| e.i_beta / eps),
        c_diam: range(&|e| e.diam / eps),
        c_vol: range(&|e| e.vol / (eps * eps)),
    }
}

/// Published closed-form bound `√((4p−1)/p⁴ + (1−(4p−1)/(2p²(1−2p)))²)` on `c_diam⁺`.
pub fn c_diam_published(p: f64) -> f64 {
    let a = (4.0 * p - 1.0) / p.powi(4);
    let b = 1.0 - (4.0 * p - 1.0) / (2.0 * p * p * (1.0 - 2.0 * p));
    (a + b * b).sqrt()
}

/// The same expression with the sign of the inner fraction corrected to `+`, which bounds the diameters.
pub fn c_diam_corrected(p: f64) -> f64 {
    let a = (4.0 * p - 1.0) / p.powi(4);
    let b = 1.0 + (4.0 * p - 1.0) / (2.0 * p * p * (1.0 - 2.0 * p));
    (a + b * b).sqrt()
}

/// `c_L⁺ = 1 + (4p−1)/(p²(2−6p+4p²))`.
pub fn c_l_plus(p: f64) -> f64 {
    1.0 + (4.0 * p - 1.0) / (p * p * (2.0 - 6.0 * p + 4.0 * p * p))
}

/// `c_I⁺ = 1 + (4p−1)/(2p²(1−2p−2p²))`.
pub fn c_i_plus(p: f64) -> f64 {
    1.0 + (4.0 * p - 1.0) / (2.0 * p * p * (1.0 - 2.0 * p - 2.0 * p * p))
}

/// Ratio ranges valid for every `ε ∈ J_k` and every `k ≥ 1`.
///
/// All ratios are scale invariant and decrease in `ε`, so upper bounds are
/// taken at `ε̂ = p cot α` and lower bounds at `ε̂ = cot α`. The diameter
/// bound is the larger of the corrected closed form and the measured hulls.
pub fn closed_form_ranges(p: f64) -> Result<ConstantRanges> {
    let sys = make_p_koch(p)?;
    let (lo_hat, hi_hat) = (p * cot_alpha(p), cot_alpha(p));
    let kinds = [ElementKind::FringedRect, ElementKind::ShortRect, ElementKind::LongRect];
    let mut at_lo = Vec::new();
    let mut at_hi = Vec::new();
    for kd in kinds {
        at_lo.push(kind_geometry(&sys, kd, lo_hat, 6)?);
        at_hi.push(kind_geometry(&sys, kd, hi_hat, 6)?);
    }
    let fold_min = |v: &[KindGeometry], f: &dyn Fn(&KindGeometry) -> f64, e: f64| v.iter().map(|g| f(g) / e).fold(f64::INFINITY, f64::min);
    let fold_max = |v: &[KindGeometry], f: &dyn Fn(&KindGeometry) -> f64, e: f64| v.iter().map(|g| f(g) / e).fold(0.0, f64::max);
    let diam_hi = fold_max(&at_lo, &|g| g.diam, lo_hat).max(c_diam_corrected(p));
    Ok(ConstantRanges {
        c_r: Range::new(1.0, 1.0),
        c_l: Range::new(fold_min(&at_hi, &|g| g.l, hi_hat), c_l_plus(p)),
        c_i: Range::new(fold_min(&at_hi, &|g| g.i_beta, hi_hat), c_i_plus(p)),
        c_diam: Range::new(fold_min(&at_hi, &|g| g.diam, hi_hat), diam_hi),
        c_vol: Range::new(
            fold_min(&at_hi, &|g| g.vol, hi_hat * hi_hat),
            fold_max(&at_lo, &|g| g.vol, lo_hat * lo_hat),
        ),
    })
}

/// `∫∫ β dt dq` over the element's fibres by midpoint quadrature in `q`, in absolute units.
///
/// Each fibre integral is an exact band sum; only the outer integral is numerical.
pub fn change_of_variables_area(element: &CoverElement, sys: &PKochSystem, samples: usize) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Precondition("at least one quadrature sample is required".into()));
    }
    let p = sys.p;
    let eh = element.eps_hat();
    let w = local_width(p, element.kind, eh);
    let tr = Tracer::new(sys);
    let top: f64 = (0..samples)
        .into_par_iter()
        .map(|i| {
            let x = (i as f64 + 0.5) / samples as f64 * w;
            match element.kind {
                ElementKind::FringedRect => {
                    let apex = fringe_apex(p);
                    let half = 0.5 * w;
                    let (u, y) = if x <= half { (x / half, x * apex.y / half) } else { ((x - half) / half, (w - x) * apex.y / half) };
                    y + band_ratio(p) * tr.measure(u, DEFAULT_FIBER_DEPTH).1
                }
                _ if x < 1.0 => tr.measure(x, DEFAULT_FIBER_DEPTH).1,
                _ => 0.0,
            }
        })
        .sum::<f64>()
        * w
        / samples as f64;
    let s = element.placement.scale;
    Ok((w * eh + top) * s * s)
}

/// Shoelace area of the element polygon at chain level `level`, in absolute units.
pub fn element_polygon_area(element: &CoverElement, sys: &PKochSystem, level: u32) -> Result<f64> {
    let poly = local_polygon(sys, element.kind, element.eps_hat(), level)?;
    Ok(polygon_area(&poly).abs() * element.placement.scale.powi(2))
}

/// Outcome of the Monte Carlo multiplicity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityReport {
    /// Points of `Ω₋ε` tested.
    pub samples: usize,
    /// Largest number of elements containing a point.
    pub max: u32,
    /// Points contained in no element.
    pub uncovered: usize,
    /// `histogram[m]` points are contained in exactly `m` elements.
    pub histogram: Vec<usize>,
}

/// Samples points of `Ω₋ε` away from the certified error band and counts the elements containing each.
pub fn measure_multiplicity(cert: &WellCoveredCertificate, samples: usize, seed: u64) -> Result<MultiplicityReport> {
    let sys = make_p_koch(cert.p)?;
    let eps = cert.epsilon;
    let dom = build_snowflake(cert.domain, cert.p, cert.k + 3)?;
    let field = DomainDistance::new(&dom);
    let eh = eps / cert.p.powi(cert.k as i32);
    let kinds = [ElementKind::FringedRect, ElementKind::ShortRect, ElementKind::LongRect];
    let locals: BTreeMap<ElementKind, (Vec<Point>, Aabb)> = kinds
        .iter()
        .map(|&kd| {
            let poly = local_polygon(&sys, kd, eh, MEMBERSHIP_LEVEL)?;
            let bb = Aabb::from_points(&poly);
            Ok((kd, (poly, bb)))
        })
        .collect::<Result<_>>()?;
    let elem_err = hausdorff_error(cert.p, MEMBERSHIP_LEVEL) * cert.p.powi(cert.k as i32);
    let margin = field.err + elem_err;
    let index = ElementIndex::new(&cert.elements, &locals);
    let cells = band_cells(&field, eps, dom.bounding_box());
    if cells.is_empty() {
        return Err(Error::Degenerate("the inner ε-neighbourhood is empty".into()));
    }
    let side = cells[0].extent().x;
    let mut points: Vec<Point> = Vec::with_capacity(samples);
    let chunk = 4096usize;
    let mut next_chunk = 0u64;
    while points.len() < samples {
        let batch: Vec<Vec<Point>> = (next_chunk..next_chunk + 64)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c);
                (0..chunk)
                    .filter_map(|_| {
                        let cell = cells[rng.random_range(0..cells.len())];
                        let q = cell.min + Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side);
                        let d = field.signed_distance(q);
                        (d > margin && d < eps - field.err).then_some(q)
                    })
                    .collect()
            })
            .collect();
        next_chunk += 64;
        for b in batch {
            points.extend(b);
        }
        if next_chunk > 1 << 16 {
            return Err(Error::Resource("multiplicity sampling found too few points of Ω₋ε".into()));
        }
    }
    points.truncate(samples);
    let counts: Vec<u32> = points.par_iter().map(|&q| index.count(q, &cert.elements, &locals)).collect();
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut histogram = vec![0usize; max as usize + 1];
    for &c in &counts {
        histogram[c as usize] += 1;
    }
    Ok(MultiplicityReport { samples, max, uncovered: histogram[0], histogram })
}

/// Equal square cells of side at most `ε/2` covering every point with `0 < d < ε`.
fn band_cells(field: &DomainDistance, eps: f64, bb: Aabb) -> Vec<Aabb> {
    let e = bb.extent();
    let mut side = e.x.max(e.y);
    let mut level = vec![Aabb::new(bb.min, bb.min + Point::new(side, side))];
    while side > 0.5 * eps {
        side *= 0.5;
        level = level
            .par_iter()
            .flat_map_iter(|c| {
                let m = c.min;
                [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
                    .map(|(a, b)| {
                        let lo = m + Point::new(a * side, b * side);
                        Aabb::new(lo, lo + Point::new(side, side))
                    })
                    .into_iter()
                    .filter(|q| {
                        let r = 0.5 * q.diagonal();
                        let d = field.signed_distance(q.center());
                        d > -r && d < eps + r
                    })
            })
            .collect();
    }
    level
}

struct ElementIndex {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
    inverses: Vec<Similarity>,
}

impl ElementIndex {
    fn new(elements: &[CoverElement], locals: &BTreeMap<ElementKind, (Vec<Point>, Aabb)>) -> Self {
        let boxes: Vec<Aabb> = elements
            .iter()
            .map(|e| {
                let lb = locals[&e.kind].1;
                let corners = [lb.min, Point::new(lb.max.x, lb.min.y), lb.max, Point::new(lb.min.x, lb.max.y)];
                Aabb::from_points(&corners.map(|c| e.placement.apply(c)))
            })
            .collect();
        let all = boxes.iter().fold(Aabb::EMPTY, |a, b| a.union(*b));
        let cell = boxes.iter().map(|b| b.extent().x.max(b.extent().y)).fold(0.0, f64::max).max(1e-12);
        let nx = ((all.extent().x / cell).ceil() as usize).max(1);
        let ny = ((all.extent().y / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (idx, b) in boxes.iter().enumerate() {
            let (x0, y0) = Self::key(all.min, cell, nx, ny, b.min);
            let (x1, y1) = Self::key(all.min, cell, nx, ny, b.max);
            for x in x0..=x1 {
                for y in y0..=y1 {
                    buckets[y * nx + x].push(idx as u32);
                }
            }
        }
        ElementIndex { origin: all.min, cell, nx, ny, buckets, inverses: elements.iter().map(|e| e.placement.inverse()).collect() }
    }

    fn key(origin: Point, cell: f64, nx: usize, ny: usize, q: Point) -> (usize, usize) {
        let x = ((q.x - origin.x) / cell).floor().clamp(0.0, (nx - 1) as f64) as usize;
        let y = ((q.y - origin.y) / cell).floor().clamp(0.0, (ny - 1) as f64) as usize;
        (x, y)
    }

    fn count(&self, q: Point, elements: &[CoverElement], locals: &BTreeMap<ElementKind, (Vec<Point>, Aabb)>) -> u32 {
        let (x, y) = Self::key(self.origin, self.cell, self.nx, self.ny, q);
        self.buckets[y * self.nx + x]
            .iter()
            .filter(|&&i| {
                let (poly, bb) = &locals[&elements[i as usize].kind];
                let l = self.inverses[i as usize].apply(q);
                bb.contains(l) && point_in_polygon(poly, l)
            })
            .count() as u32
    }
}

/// Straight vertical foliation of the region under a graph `y = f(x) > 0`, `x ∈ [0, base]`, with `β ≡ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFoliation {
    /// Sample abscissae.
    pub xs: Vec<f64>,
    /// Heights, i.e. fibre lengths at the samples.
    pub heights: Vec<f64>,
    /// The density, identically one.
    pub beta: f64,
}

/// Builds the vertical foliation from equispaced positive height samples.
pub fn graph_domain_foliation(f_samples: &[f64], base: f64) -> Result<GraphFoliation> {
    if f_samples.len() < 2 || !(base > 0.0) {
        return Err(Error::Precondition("need at least two samples and a positive base".into()));
    }
    if let Some(v) = f_samples.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Domain(format!("heights must be positive, got {v}")));
    }
    let m = f_samples.len() - 1;
    Ok(GraphFoliation {
        xs: (0..=m).map(|i| base * i as f64 / m as f64).collect(),
        heights: f_samples.to_vec(),
        beta: 1.0,
    })
}

impl GraphFoliation {
    /// Length of the fibre at `x` (linear interpolation).
    pub fn fiber_length(&self, x: f64) -> f64 {
        let base = *self.xs.last().expect("at least two samples");
        let m = self.xs.len() - 1;
        let t = (x / base * m as f64).clamp(0.0, m as f64);
        let i = (t.floor() as usize).min(m - 1);
        let f = t - i as f64;
        self.heights[i] * (1.0 - f) + self.heights[i + 1] * f
    }

    /// `∫∫ β dt dq`, exact for the interpolated graph.
    pub fn integral(&self) -> f64 {
        self.xs.windows(2).zip(self.heights.windows(2)).map(|(x, h)| (x[1] - x[0]) * 0.5 * (h[0] + h[1])).sum()
    }

    /// `sup ∫β dt` over fibres.
    pub fn i_beta(&self) -> f64 {
        self.heights.iter().copied().fold(0.0, f64::max)
    }

    /// Longest fibre.
    pub fn l(&self) -> f64 {
        self.i_beta()
    }

    /// Shortest fibre.
    pub fn r(&self) -> f64 {
        self.heights.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
