//! Dyadic Whitney covers of snowflake domains with per-slice counts,
//! certified distance sandwiches, `ε`-restrictions and union perimeters.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::DomainDistance;
use crate::error::{Error, Result};
use crate::ifs_geometry::SnowflakeDomain;
use crate::point::{Aabb, Point};

/// Default cap on the number of cubes visited during construction.
pub const DEFAULT_CUBE_BUDGET: usize = 1 << 26;

/// Dyadic square `[i, i+1] × [j, j+1] · 2^{−k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    /// Level; the side is `2^{−k}`.
    pub k: i32,
    /// Lattice corner along `x`.
    pub i: i64,
    /// Lattice corner along `y`.
    pub j: i64,
}

impl DyadicCube {
    /// Side length `2^{−k}`.
    pub fn side(&self) -> f64 {
        2f64.powi(-self.k)
    }

    /// Diameter `2^{−k}√2`.
    pub fn diam(&self) -> f64 {
        self.side() * 2f64.sqrt()
    }

    /// Closed box of the cube.
    pub fn bbox(&self) -> Aabb {
        let s = self.side();
        let lo = Point::new(self.i as f64 * s, self.j as f64 * s);
        Aabb::new(lo, lo + Point::new(s, s))
    }

    /// The four children at level `k + 1`.
    pub fn children(&self) -> [DyadicCube; 4] {
        let (k, i, j) = (self.k + 1, 2 * self.i, 2 * self.j);
        [
            DyadicCube { k, i, j },
            DyadicCube { k, i: i + 1, j },
            DyadicCube { k, i, j: j + 1 },
            DyadicCube { k, i: i + 1, j: j + 1 },
        ]
    }

    /// Whether `self` contains `other` (as closed dyadic cubes of levels `≤`).
    pub fn contains(&self, other: &DyadicCube) -> bool {
        if other.k < self.k {
            return false;
        }
        let sh = other.k - self.k;
        (other.i >> sh) == self.i && (other.j >> sh) == self.j
    }
}

/// A retained cube together with its measured distances to the polygon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedCube {
    /// The cube.
    pub cube: DyadicCube,
    /// Distance from the closed cube to the polygon.
    pub dist: f64,
    /// Signed distance of the centre.
    pub center_dist: f64,
}

/// Outcome of the sandwich `diam(Q) ≤ dist(Q, ∂Ω) ≤ 4 diam(Q)` for one cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    /// `dist/diam` measured against the polygon.
    pub ratio: f64,
    /// Whether the sandwich holds within the certified error.
    pub ok: bool,
}

/// Disjoint maximal Whitney cubes of a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCover {
    /// Retained cubes.
    pub cubes: Vec<CertifiedCube>,
    /// `#W_k` per level.
    pub slice_counts: BTreeMap<i32, u64>,
    /// `[k′₋, k_max]`.
    pub k_range: (i32, i32),
    /// Hausdorff error of the distance field.
    pub err: f64,
    /// Width `2^{−k_max+1}√2` of the untiled boundary layer.
    pub eps_trunc: f64,
    /// Number of cubes visited.
    pub visited: usize,
}

/// Starting level `k′₋ = ⌊−log₂(diam/√n)⌋`.
pub fn k_start(diam: f64, n: usize) -> i32 {
    (-(diam / (n as f64).sqrt()).log2()).floor() as i32
}

/// Polygon error required for a cover built to level `k_max`: `2^{−k_max−3}√2`.
pub fn required_error(k_max: i32) -> f64 {
    2f64.powi(-k_max - 3) * 2f64.sqrt()
}

/// Smallest polygon level meeting [`required_error`] for `k_max`.
pub fn required_level(p: f64, k_max: i32) -> u32 {
    let target = required_error(k_max);
    (0..64u32).find(|&m| crate::ifs_geometry::hausdorff_error(p, m) <= target).unwrap_or(64)
}

/// Builds the Whitney cover down to level `k_max` with the default cube budget.
pub fn build_whitney(domain: &SnowflakeDomain, k_max: i32) -> Result<WhitneyCover> {
    build_whitney_with(domain, &DomainDistance::new(domain), k_max, DEFAULT_CUBE_BUDGET)
}

/// Builds the Whitney cover by recursive dyadic descent from `k′₋`.
///
/// A cube belongs to `W′_k` when it lies inside `Ω`, `dist − err ≤ 4 diam` and
/// its farthest point may reach `2 diam`. Descent continues into cubes that can
/// still contain smaller `W′` cubes; cubes with a `W′` ancestor are discarded.
pub fn build_whitney_with(
    domain: &SnowflakeDomain,
    field: &DomainDistance,
    k_max: i32,
    budget: usize,
) -> Result<WhitneyCover> {
    let err = field.err;
    if err > required_error(k_max) {
        return Err(Error::Certification(format!(
            "polygon error {err:.3e} exceeds {:.3e} required for k_max = {k_max}; use level ≥ {}",
            required_error(k_max),
            required_level(domain.p, k_max)
        )));
    }
    build_whitney_field(field, domain.bounding_box(), domain.diameter_upper(), k_max, budget)
}

/// Builds the Whitney cover of the region inside the polygon of `field`.
///
/// `bb` must enclose the region and `diam` must bound its diameter from above.
pub fn build_whitney_field(
    field: &DomainDistance,
    bb: Aabb,
    diam: f64,
    k_max: i32,
    budget: usize,
) -> Result<WhitneyCover> {
    let err = field.err;
    let k0 = k_start(diam, 2);
    if k_max < k0 {
        return Err(Error::Precondition(format!("k_max = {k_max} lies below the starting level {k0}")));
    }
    let s = 2f64.powi(-k0);
    let (i0, i1) = ((bb.min.x / s).floor() as i64, (bb.max.x / s).ceil() as i64);
    let (j0, j1) = ((bb.min.y / s).floor() as i64, (bb.max.y / s).ceil() as i64);
    let mut frontier: Vec<DyadicCube> =
        (i0..i1).flat_map(|i| (j0..j1).map(move |j| DyadicCube { k: k0, i, j })).collect();
    let mut cubes = Vec::new();
    let mut visited = 0usize;
    while !frontier.is_empty() {
        visited += frontier.len();
        if visited > budget {
            return Err(Error::Resource(format!("Whitney construction exceeds the cube budget {budget}")));
        }
        let results: Vec<Visit> = frontier.par_iter().map(|q| visit(field, q, k_max)).collect();
        let mut next = Vec::new();
        for (q, r) in frontier.iter().zip(results) {
            match r {
                Visit::Keep(c) => cubes.push(c),
                Visit::Descend => next.extend_from_slice(&q.children()),
                Visit::Drop => {}
            }
        }
        frontier = next;
    }
    cubes.sort_by_key(|c| c.cube);
    let mut slice_counts = BTreeMap::new();
    for c in &cubes {
        *slice_counts.entry(c.cube.k).or_insert(0u64) += 1;
    }
    Ok(WhitneyCover {
        cubes,
        slice_counts,
        k_range: (k0, k_max),
        err,
        eps_trunc: 2f64.powi(-k_max + 1) * 2f64.sqrt(),
        visited,
    })
}

enum Visit {
    Keep(CertifiedCube),
    Descend,
    Drop,
}

fn visit(field: &DomainDistance, q: &DyadicCube, k_max: i32) -> Visit {
    let bx = q.bbox();
    let diam = q.diam();
    let dmin = field.box_distance(bx);
    let dc = field.signed_distance(bx.center());
    let r = 0.5 * diam;
    let err = field.err;
    let inside = dc > 0.0 && dmin > 0.0;
    if inside && dmin - err <= 4.0 * diam && dc + r + err >= 2.0 * diam {
        return Visit::Keep(CertifiedCube { cube: *q, dist: dmin, center_dist: dc });
    }
    let meets = dc > 0.0 || dmin <= err;
    if q.k < k_max && meets && dmin - err <= 2.0 * diam {
        Visit::Descend
    } else {
        Visit::Drop
    }
}

impl WhitneyCover {
    /// Volume `Σ vol(Q)` of the retained cubes.
    pub fn volume(&self) -> f64 {
        self.cubes.iter().map(|c| c.cube.side().powi(2)).sum()
    }

    /// The sandwich check for every cube.
    pub fn sandwiches(&self) -> Vec<Sandwich> {
        self.cubes
            .iter()
            .map(|c| {
                let d = c.cube.diam();
                Sandwich { ratio: c.dist / d, ok: c.dist + self.err >= d && c.dist - self.err <= 4.0 * d }
            })
            .collect()
    }

    /// Fraction of cubes passing the sandwich check.
    pub fn sandwich_pass_rate(&self) -> f64 {
        if self.cubes.is_empty() {
            return 1.0;
        }
        self.sandwiches().iter().filter(|s| s.ok).count() as f64 / self.cubes.len() as f64
    }

    /// `max_k #W_k 2^{−kδ}`.
    pub fn frak_estimate(&self, delta: f64) -> f64 {
        self.slice_counts
            .iter()
            .map(|(&k, &c)| c as f64 * 2f64.powf(-(k as f64) * delta))
            .fold(0.0, f64::max)
    }

    /// Levels `k` where `#W_k > 𝔐 2^{kδ}`.
    pub fn slice_violations(&self, m_frak: f64, delta: f64) -> Vec<i32> {
        self.slice_counts
            .iter()
            .filter(|(&k, &c)| c as f64 > m_frak * 2f64.powf(k as f64 * delta))
            .map(|(&k, _)| k)
            .collect()
    }

    /// Finds a pair of retained cubes that overlap (one contains the other).
    pub fn first_overlap(&self) -> Option<(DyadicCube, DyadicCube)> {
        let set: HashMap<DyadicCube, ()> = self.cubes.iter().map(|c| (c.cube, ())).collect();
        for c in &self.cubes {
            let mut a = c.cube;
            while a.k > self.k_range.0 {
                a = DyadicCube { k: a.k - 1, i: a.i >> 1, j: a.j >> 1 };
                if set.contains_key(&a) {
                    return Some((a, c.cube));
                }
            }
        }
        None
    }

    /// Writes `k,corner_x,corner_y` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k", "corner_x", "corner_y"])?;
        for c in &self.cubes {
            wr.serialize((c.cube.k, c.cube.i, c.cube.j))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// JSON summary `{slice_counts, M_frak_estimate, A_bound}`.
    pub fn summary_json(&self, delta: f64, a_bound: f64) -> serde_json::Value {
        serde_json::json!({
            "slice_counts": self.slice_counts,
            "M_frak_estimate": self.frak_estimate(delta),
            "A_bound": a_bound,
            "k_range": [self.k_range.0, self.k_range.1],
            "cubes": self.cubes.len(),
            "eps_trunc": self.eps_trunc,
        })
    }
}

/// The cubes of `W_ε` reaching outside `Ω₋ε`, and the perimeter of their union.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsRestriction {
    /// Tube width.
    pub epsilon: f64,
    /// Cubes of `W_ε`.
    pub cubes: Vec<DyadicCube>,
    /// Perimeter of their union.
    pub perimeter: f64,
    /// `A_Ω`, so that `perimeter ≤ A_Ω ε^{(n−1)−δ}`.
    pub a_bound: f64,
    /// Distinct diameters of cubes with a face on the union boundary.
    pub boundary_diams: Vec<f64>,
}

impl EpsRestriction {
    /// The bound `A_Ω ε^{(n−1)−δ}`.
    pub fn perimeter_bound(&self, delta: f64) -> f64 {
        self.a_bound * self.epsilon.powf(1.0 - delta)
    }
}

/// Selects `W_ε` from a cover and measures its union perimeter.
pub fn restrict_eps(cover: &WhitneyCover, eps: f64, a_bound: f64) -> Result<EpsRestriction> {
    let min_eps = 2f64.powi(-cover.k_range.1) * 5.0 * 2f64.sqrt();
    if !(eps >= min_eps) {
        return Err(Error::Precondition(format!(
            "ε = {eps} below 5√n 2^(−k_max) = {min_eps}; build the cover deeper"
        )));
    }
    let cubes: Vec<DyadicCube> = cover
        .cubes
        .iter()
        .filter(|c| {
            let d = c.cube.diam();
            (c.center_dist + 0.5 * d).min(c.dist + d) + cover.err >= eps
        })
        .map(|c| c.cube)
        .collect();
    let (perimeter, on_boundary) = union_perimeter_detail(&cubes);
    let mut diams: Vec<f64> = on_boundary.iter().map(|c| c.diam()).collect();
    diams.sort_by(f64::total_cmp);
    diams.dedup();
    Ok(EpsRestriction { epsilon: eps, cubes, perimeter, a_bound, boundary_diams: diams })
}

/// Perimeter of a union of pairwise disjoint dyadic squares.
pub fn union_perimeter(cubes: &[DyadicCube]) -> f64 {
    union_perimeter_detail(cubes).0
}

/// Per lattice line, the exposed length is `|A| + |B| − 2|A ∩ B|` for the
/// face sets `A` (cubes on one side) and `B` (cubes on the other side).
fn union_perimeter_detail(cubes: &[DyadicCube]) -> (f64, Vec<DyadicCube>) {
    let Some(kf) = cubes.iter().map(|c| c.k).max() else {
        return (0.0, Vec::new());
    };
    type Lines = HashMap<i64, (Vec<(i64, i64, usize)>, Vec<(i64, i64, usize)>)>;
    let mut horiz: Lines = HashMap::new();
    let mut vert: Lines = HashMap::new();
    for (idx, c) in cubes.iter().enumerate() {
        let m = 1i64 << (kf - c.k);
        let (x0, y0) = (c.i * m, c.j * m);
        horiz.entry(y0).or_default().0.push((x0, x0 + m, idx));
        horiz.entry(y0 + m).or_default().1.push((x0, x0 + m, idx));
        vert.entry(x0).or_default().0.push((y0, y0 + m, idx));
        vert.entry(x0 + m).or_default().1.push((y0, y0 + m, idx));
    }
    let mut exposed = vec![false; cubes.len()];
    let mut total: i64 = 0;
    for lines in [horiz, vert] {
        for (_, (mut a, mut b)) in lines {
            a.sort_unstable();
            b.sort_unstable();
            let la: i64 = a.iter().map(|s| s.1 - s.0).sum();
            let lb: i64 = b.iter().map(|s| s.1 - s.0).sum();
            let common = overlap_len(&a, &b);
            total += la + lb - 2 * common;
            mark_exposed(&a, &b, &mut exposed);
            mark_exposed(&b, &a, &mut exposed);
        }
    }
    let unit = 2f64.powi(-kf);
    let boundary = cubes.iter().zip(&exposed).filter(|(_, &e)| e).map(|(c, _)| *c).collect();
    (total as f64 * unit, boundary)
}

fn overlap_len(a: &[(i64, i64, usize)], b: &[(i64, i64, usize)]) -> i64 {
    let (mut i, mut j, mut s) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            s += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    s
}

fn mark_exposed(a: &[(i64, i64, usize)], b: &[(i64, i64, usize)], exposed: &mut [bool]) {
    for seg in a {
        let start = b.partition_point(|s| s.1 <= seg.0);
        let covered: i64 = b[start..]
            .iter()
            .take_while(|s| s.0 < seg.1)
            .map(|s| s.1.min(seg.1) - s.0.max(seg.0))
            .sum();
        if covered < seg.1 - seg.0 {
            exposed[seg.2] = true;
        }
    }
}
