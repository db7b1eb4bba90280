//! Quadtree over the segments of a closed polygon, answering nearest-segment,
//! signed-distance and box-distance queries.
//!
//! Segments are bucketed by the quadrant of their midpoint; every node keeps
//! the tight bounding box of its segments so queries prune by box distance.

use crate::point::{point_segment, segment_box, Aabb, Point};

const LEAF_SIZE: usize = 8;
const MAX_DEPTH: u32 = 48;

#[derive(Debug, Clone)]
struct Node {
    bbox: Aabb,
    start: u32,
    end: u32,
    children: [u32; 4],
    n_children: u8,
}

/// Nearest boundary feature of a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    /// Unsigned distance to the polygon.
    pub dist: f64,
    /// Index of the nearest segment (from vertex `seg` to `seg + 1`).
    pub seg: usize,
    /// Parameter of the closest point along that segment.
    pub t: f64,
}

/// Spatial index over the closed vertex ring of a simple polygon.
#[derive(Debug, Clone)]
pub struct SegmentQuadtree {
    vertices: Vec<Point>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    ccw: bool,
}

impl SegmentQuadtree {
    /// Builds the index for a closed ring (the first vertex is not repeated).
    pub fn new(vertices: Vec<Point>) -> Self {
        let n = vertices.len();
        let ccw = crate::point::polygon_area(&vertices) >= 0.0;
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mids: Vec<Point> = (0..n).map(|i| (vertices[i] + vertices[(i + 1) % n]) * 0.5).collect();
        let mut tree = SegmentQuadtree { vertices, order: Vec::new(), nodes: Vec::new(), ccw };
        tree.build(&mut order, &mids, 0, n, 0);
        tree.order = order;
        tree
    }

    /// The indexed vertex ring.
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Number of segments.
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    /// Whether the ring is empty.
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn seg(&self, i: usize) -> (Point, Point) {
        (self.vertices[i], self.vertices[(i + 1) % self.vertices.len()])
    }

    fn build(&mut self, order: &mut [u32], mids: &[Point], start: usize, end: usize, depth: u32) -> u32 {
        let mut bbox = Aabb::EMPTY;
        let mut mbox = Aabb::EMPTY;
        for &i in &order[start..end] {
            let (a, b) = self.seg(i as usize);
            bbox.grow(a);
            bbox.grow(b);
            mbox.grow(mids[i as usize]);
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(Node { bbox, start: start as u32, end: end as u32, children: [0; 4], n_children: 0 });
        if end - start <= LEAF_SIZE || depth >= MAX_DEPTH {
            return id;
        }
        let c = mbox.center();
        let slice = &mut order[start..end];
        let quadrant = |i: u32| -> usize {
            let m = mids[i as usize];
            (m.x > c.x) as usize + 2 * (m.y > c.y) as usize
        };
        slice.sort_unstable_by_key(|&i| quadrant(i));
        let mut bounds = [0usize; 5];
        for q in 0..4 {
            bounds[q + 1] = bounds[q] + slice.iter().filter(|&&i| quadrant(i) == q).count();
        }
        if bounds.windows(2).any(|w| w[1] - w[0] == end - start) {
            return id;
        }
        let mut kids = [0u32; 4];
        let mut nk = 0;
        for q in 0..4 {
            if bounds[q + 1] > bounds[q] {
                kids[nk] = self.build(order, mids, start + bounds[q], start + bounds[q + 1], depth + 1);
                nk += 1;
            }
        }
        let node = &mut self.nodes[id as usize];
        node.children = kids;
        node.n_children = nk as u8;
        id
    }

    /// Nearest segment to `q`.
    pub fn nearest(&self, q: Point) -> Nearest {
        let mut best = Nearest { dist: f64::INFINITY, seg: 0, t: 0.0 };
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if node.bbox.dist_to_point(q) >= best.dist {
                continue;
            }
            if node.n_children == 0 {
                for &i in &self.order[node.start as usize..node.end as usize] {
                    let (a, b) = self.seg(i as usize);
                    let (t, d) = point_segment(q, a, b);
                    if d < best.dist {
                        best = Nearest { dist: d, seg: i as usize, t };
                    }
                }
            } else {
                let mut kids: Vec<(f64, u32)> = node.children[..node.n_children as usize]
                    .iter()
                    .map(|&c| (self.nodes[c as usize].bbox.dist_to_point(q), c))
                    .collect();
                kids.sort_by(|a, b| b.0.total_cmp(&a.0));
                stack.extend(kids.into_iter().map(|(_, c)| c));
            }
        }
        best
    }

    /// Unsigned distance from `q` to the polygon.
    pub fn distance(&self, q: Point) -> f64 {
        self.nearest(q).dist
    }

    /// Signed distance, positive inside the polygon.
    ///
    /// The sign comes from the nearest feature: the side of the nearest
    /// segment, or the pseudo-normal of the two edges at a nearest vertex.
    pub fn signed_distance(&self, q: Point) -> f64 {
        let nb = self.nearest(q);
        let n = self.vertices.len();
        let (a, b) = self.seg(nb.seg);
        let outward = |i: usize| {
            let (a, b) = self.seg(i);
            let d = b - a;
            let nrm = Point::new(d.y, -d.x) * (1.0 / d.norm());
            if self.ccw { nrm } else { -nrm }
        };
        let eps = 1e-12;
        let side = if nb.t <= eps {
            let pn = outward(nb.seg) + outward((nb.seg + n - 1) % n);
            -(q - a).dot(pn)
        } else if nb.t >= 1.0 - eps {
            let pn = outward(nb.seg) + outward((nb.seg + 1) % n);
            -(q - b).dot(pn)
        } else {
            -(q - a).dot(outward(nb.seg))
        };
        if side > 0.0 { nb.dist } else { -nb.dist }
    }

    /// Whether `q` lies inside the polygon (by the signed-distance rule).
    pub fn contains(&self, q: Point) -> bool {
        self.signed_distance(q) > 0.0
    }

    /// Distance from a closed box to the polygon (0 if the box meets it).
    pub fn box_distance(&self, bx: Aabb) -> f64 {
        let mut best = f64::INFINITY;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if node.bbox.dist_to_box(bx) >= best {
                continue;
            }
            if node.n_children == 0 {
                for &i in &self.order[node.start as usize..node.end as usize] {
                    let (a, b) = self.seg(i as usize);
                    let d = segment_box(a, b, bx);
                    if d < best {
                        best = d;
                        if best == 0.0 {
                            return 0.0;
                        }
                    }
                }
            } else {
                let mut kids: Vec<(f64, u32)> = node.children[..node.n_children as usize]
                    .iter()
                    .map(|&c| (self.nodes[c as usize].bbox.dist_to_box(bx), c))
                    .collect();
                kids.sort_by(|a, b| b.0.total_cmp(&a.0));
                stack.extend(kids.into_iter().map(|(_, c)| c));
            }
        }
        best
    }
}

/// Distance field of a snowflake polygon together with its certified error
/// against the true fractal boundary.
#[derive(Debug, Clone)]
pub struct DomainDistance {
    /// Index over the polygon.
    pub tree: SegmentQuadtree,
    /// Hausdorff distance between polygon and limit boundary.
    pub err: f64,
}

impl DomainDistance {
    /// Indexes the polygon of a snowflake domain.
    pub fn new(domain: &crate::ifs_geometry::SnowflakeDomain) -> Self {
        DomainDistance { tree: SegmentQuadtree::new(domain.polygon()), err: domain.hausdorff_error() }
    }

    /// Indexes an arbitrary simple counter-clockwise polygon with a given boundary error.
    pub fn from_polygon(vertices: Vec<Point>, err: f64) -> Self {
        DomainDistance { tree: SegmentQuadtree::new(vertices), err }
    }

    /// Signed distance to the polygon, positive inside; the true value lies within `±err`.
    pub fn signed_distance(&self, q: Point) -> f64 {
        self.tree.signed_distance(q)
    }

    /// Distance from a box to the polygon; the true value lies within `±err`.
    pub fn box_distance(&self, bx: Aabb) -> f64 {
        self.tree.box_distance(bx)
    }
}
