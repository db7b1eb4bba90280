use std::collections::HashSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowcount::constants::domain_ledger;
use snowcount::distance::DomainDistance;
use snowcount::ifs_geometry::{build_snowflake, DomainKind};
use snowcount::point::{point_segment, Aabb};
use snowcount::whitney::*;
use snowcount::{Error, Point};

fn unit_square() -> DomainDistance {
    let v = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)].map(|(x, y)| Point::new(x, y));
    DomainDistance::from_polygon(v.to_vec(), 0.0)
}

fn square_cover(k_max: i32) -> WhitneyCover {
    let bb = Aabb::new(Point::new(0.0, 0.0), Point::new(1.0, 1.0));
    build_whitney_field(&unit_square(), bb, 2f64.sqrt(), k_max, DEFAULT_CUBE_BUDGET).unwrap()
}

/// Exact distance from the closed cube to the boundary of the unit square.
fn square_min_dist(q: &DyadicCube) -> f64 {
    let b = q.bbox();
    b.min.x.min(b.min.y).min(1.0 - b.max.x).min(1.0 - b.max.y)
}

/// Exact maximum over the cube of the distance to the boundary of the unit square.
fn square_max_dist(q: &DyadicCube) -> f64 {
    let b = q.bbox();
    let g = |lo: f64, hi: f64| {
        let t = 0.5f64.clamp(lo, hi);
        t.min(1.0 - t)
    };
    g(b.min.x, b.max.x).min(g(b.min.y, b.max.y))
}

fn brute_distance(poly: &[Point], q: Point) -> f64 {
    (0..poly.len()).map(|i| point_segment(q, poly[i], poly[(i + 1) % poly.len()]).1).fold(f64::INFINITY, f64::min)
}

fn ancestors_in(set: &HashSet<DyadicCube>, q: DyadicCube, k_min: i32) -> bool {
    let mut a = q;
    loop {
        if set.contains(&a) {
            return true;
        }
        if a.k <= k_min {
            return false;
        }
        a = DyadicCube { k: a.k - 1, i: a.i >> 1, j: a.j >> 1 };
    }
}

/// Perimeter oracle: rasterise the union at the finest level and count exposed unit edges.
fn raster_perimeter(cubes: &[DyadicCube]) -> f64 {
    let Some(kf) = cubes.iter().map(|c| c.k).max() else { return 0.0 };
    let mut cells = HashSet::new();
    for c in cubes {
        let m = 1i64 << (kf - c.k);
        for a in 0..m {
            for b in 0..m {
                cells.insert((c.i * m + a, c.j * m + b));
            }
        }
    }
    let exposed: usize = cells
        .iter()
        .map(|&(a, b)| {
            [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().filter(|(da, db)| !cells.contains(&(a + da, b + db))).count()
        })
        .sum();
    exposed as f64 * 2f64.powi(-kf)
}

#[test]
fn cube_geometry() {
    let q = DyadicCube { k: 3, i: 2, j: 5 };
    assert_eq!(q.side(), 0.125);
    assert!((q.diam() - 0.125 * 2f64.sqrt()).abs() < 1e-16);
    let b = q.bbox();
    assert_eq!((b.min.x, b.min.y, b.max.x, b.max.y), (0.25, 0.625, 0.375, 0.75));
    for c in q.children() {
        assert!(q.contains(&c));
        assert!(!c.contains(&q));
        assert_eq!(c.side(), 0.0625);
    }
    assert!(!q.contains(&DyadicCube { k: 4, i: 6, j: 10 }));
}

#[test]
fn start_level_and_required_error() {
    assert_eq!(k_start(2f64.sqrt(), 2), 0);
    assert_eq!(k_start(2.0 / 3f64.sqrt(), 2), 0);
    assert_eq!(k_start(0.3, 2), 2);
    assert!((required_error(12) - 2f64.powi(-15) * 2f64.sqrt()).abs() < 1e-20);
    let m = required_level(1.0 / 3.0, 9);
    assert!(snowcount::ifs_geometry::hausdorff_error(1.0 / 3.0, m) <= required_error(9));
    assert!(snowcount::ifs_geometry::hausdorff_error(1.0 / 3.0, m - 1) > required_error(9));
}

#[test]
fn unit_square_cubes_satisfy_the_sandwich_exactly() {
    let cover = square_cover(6);
    assert!(!cover.cubes.is_empty());
    assert_eq!(cover.sandwich_pass_rate(), 1.0);
    for c in &cover.cubes {
        let d = square_min_dist(&c.cube);
        assert!((c.dist - d).abs() < 1e-14, "{c:?} vs exact {d}");
        assert!(c.cube.diam() <= d && d <= 4.0 * c.cube.diam(), "{c:?}");
    }
}

#[test]
fn unit_square_cover_is_disjoint_and_maximal() {
    let k_max = 6;
    let cover = square_cover(k_max);
    assert!(cover.first_overlap().is_none());
    let list: Vec<DyadicCube> = cover.cubes.iter().map(|c| c.cube).collect();
    for (a, p) in list.iter().enumerate() {
        for q in &list[a + 1..] {
            let (bp, bq) = (p.bbox(), q.bbox());
            let overlap_x = bp.min.x.max(bq.min.x) < bp.max.x.min(bq.max.x);
            let overlap_y = bp.min.y.max(bq.min.y) < bp.max.y.min(bq.max.y);
            assert!(!(overlap_x && overlap_y), "{p:?} and {q:?} overlap");
        }
    }
    let set: HashSet<DyadicCube> = list.iter().copied().collect();
    let mut shell_cubes = 0;
    for k in 0..=k_max {
        let n = 1i64 << k;
        for i in 0..n {
            for j in 0..n {
                let q = DyadicCube { k, i, j };
                let d = q.diam();
                if square_min_dist(&q) <= 4.0 * d && square_max_dist(&q) >= 2.0 * d {
                    shell_cubes += 1;
                    assert!(ancestors_in(&set, q, 0), "shell cube {q:?} is not inside a retained cube");
                }
            }
        }
    }
    assert!(shell_cubes >= list.len());
}

#[test]
fn unit_square_volume_sandwich_and_slice_counts() {
    let cover = square_cover(7);
    let tail = 1.0 - (1.0 - 2.0 * cover.eps_trunc).powi(2);
    let v = cover.volume();
    assert!(v <= 1.0 && v + tail >= 1.0, "{v} + {tail}");
    let mut counts = std::collections::BTreeMap::new();
    for c in &cover.cubes {
        *counts.entry(c.cube.k).or_insert(0u64) += 1;
    }
    assert_eq!(counts, cover.slice_counts);
    assert_eq!(cover.k_range, (0, 7));
    assert!(cover.slice_counts.keys().all(|&k| (0..=7).contains(&k)));
}

#[test]
fn preconditions_and_budget() {
    let d = build_snowflake(DomainKind::TriangleK, 1.0 / 3.0, 3).unwrap();
    assert!(matches!(build_whitney(&d, 12), Err(Error::Certification(_))));
    let d = build_snowflake(DomainKind::TriangleK, 1.0 / 3.0, required_level(1.0 / 3.0, 8)).unwrap();
    let field = DomainDistance::new(&d);
    assert!(matches!(build_whitney_with(&d, &field, 8, 100), Err(Error::Resource(_))));
    assert!(matches!(build_whitney_with(&d, &field, -3, DEFAULT_CUBE_BUDGET), Err(Error::Precondition(_))));
}

struct KochCover {
    poly: Vec<Point>,
    field: DomainDistance,
    cover: WhitneyCover,
}

fn koch_cover(k_max: i32) -> KochCover {
    let d = build_snowflake(DomainKind::TriangleK, 1.0 / 3.0, required_level(1.0 / 3.0, k_max)).unwrap();
    let field = DomainDistance::new(&d);
    let cover = build_whitney_with(&d, &field, k_max, DEFAULT_CUBE_BUDGET).unwrap();
    KochCover { poly: d.polygon(), field, cover }
}

#[test]
fn koch_sandwich_against_brute_force_distance() {
    let kc = koch_cover(7);
    let err = kc.field.err;
    assert_eq!(kc.cover.sandwich_pass_rate(), 1.0);
    assert!(kc.cover.first_overlap().is_none());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..60 {
        let c = kc.cover.cubes[rng.random_range(0..kc.cover.cubes.len())];
        let (q, diam) = (c.cube, c.cube.diam());
        let b = q.bbox();
        let r = 0.5 * diam;
        let lower = brute_distance(&kc.poly, b.center()) - r;
        let steps = 16;
        let h = q.side() / steps as f64;
        let upper = (0..4 * steps)
            .map(|s| {
                let t = (s % steps) as f64 * h;
                let p = match s / steps {
                    0 => Point::new(b.min.x + t, b.min.y),
                    1 => Point::new(b.max.x, b.min.y + t),
                    2 => Point::new(b.max.x - t, b.max.y),
                    _ => Point::new(b.min.x, b.max.y - t),
                };
                brute_distance(&kc.poly, p)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(lower + err >= diam, "{c:?}: lower {lower}");
        assert!(upper - 0.5 * h - err <= 4.0 * diam, "{c:?}: upper {upper}");
    }
}

#[test]
fn koch_slices_obey_the_cardinality_law() {
    let kc = koch_cover(9);
    let ledger = domain_ledger(DomainKind::TriangleK, 1.0 / 3.0).unwrap();
    assert!(kc.cover.slice_violations(ledger.m_frak, ledger.delta).is_empty());
    assert!(kc.cover.frak_estimate(ledger.delta) <= ledger.m_frak);
    assert!(ledger.m_frak <= 11.61);
}

#[test]
fn koch_volume_sandwich_by_monte_carlo() {
    let kc = koch_cover(8);
    let set: HashSet<DyadicCube> = kc.cover.cubes.iter().map(|c| c.cube).collect();
    let (k0, k_max) = kc.cover.k_range;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let lo = Point::new(-0.2, -0.6);
    let ext = Point::new(1.4, 1.8);
    let cube_at = |q: Point| DyadicCube { k: k_max, i: (q.x * 2f64.powi(k_max)).floor() as i64, j: (q.y * 2f64.powi(k_max)).floor() as i64 };
    let mut tested = 0;
    for _ in 0..20_000 {
        let q = Point::new(lo.x + rng.random::<f64>() * ext.x, lo.y + rng.random::<f64>() * ext.y);
        let d = kc.field.signed_distance(q);
        let covered = ancestors_in(&set, cube_at(q), k0);
        if covered {
            assert!(d > -kc.field.err, "cube point {q:?} lies outside the domain");
        }
        if d > kc.cover.eps_trunc + kc.field.err {
            tested += 1;
            assert!(covered, "interior point {q:?} at depth {d} is not covered");
        }
    }
    assert!(tested > 1000);
}

#[test]
fn koch_restrictions() {
    let kc = koch_cover(9);
    let ledger = domain_ledger(DomainKind::TriangleK, 1.0 / 3.0).unwrap();
    let cover = &kc.cover;
    let min_eps = 2f64.powi(-9) * 5.0 * 2f64.sqrt();
    assert!(matches!(restrict_eps(cover, 0.5 * min_eps, ledger.a_omega), Err(Error::Precondition(_))));
    for eps in [min_eps, 0.03, 0.06, 0.12, 0.25] {
        let r = restrict_eps(cover, eps, ledger.a_omega).unwrap();
        assert!(!r.cubes.is_empty());
        assert!(r.perimeter <= r.perimeter_bound(ledger.delta), "eps {eps}: {} > {}", r.perimeter, r.perimeter_bound(ledger.delta));
        assert!(r.boundary_diams.len() <= 3, "eps {eps}: {:?}", r.boundary_diams);
        for d in &r.boundary_diams {
            assert!(*d >= eps / 5.0 - 1e-12 && *d <= eps + 1e-12, "eps {eps}: diam {d}");
        }
        assert!((r.perimeter - raster_perimeter(&r.cubes)).abs() < 1e-9);
        let chosen: HashSet<DyadicCube> = r.cubes.iter().copied().collect();
        for c in &cover.cubes {
            let depth = sampled_depth(&kc, c.cube);
            if depth >= eps + kc.field.err {
                assert!(chosen.contains(&c.cube), "eps {eps}: {c:?} reaches depth {depth}");
            }
        }
    }
    let empty = restrict_eps(cover, 2.0, ledger.a_omega).unwrap();
    assert!(empty.cubes.is_empty());
    assert_eq!(empty.perimeter, 0.0);
}

/// Largest signed distance among the corners and centre of the cube.
fn sampled_depth(kc: &KochCover, q: DyadicCube) -> f64 {
    let b = q.bbox();
    [b.min, b.max, Point::new(b.min.x, b.max.y), Point::new(b.max.x, b.min.y), b.center()]
        .iter()
        .map(|&p| kc.field.signed_distance(p))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn exports() {
    let cover = square_cover(4);
    let mut buf = Vec::new();
    cover.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,corner_x,corner_y"));
    assert_eq!(lines.count(), cover.cubes.len());
    let j = cover.summary_json(1.0, 2.0);
    for key in ["slice_counts", "M_frak_estimate", "A_bound"] {
        assert!(j.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn union_perimeter_examples() {
    let s = 0.25;
    let a = DyadicCube { k: 2, i: 1, j: 1 };
    assert_eq!(union_perimeter(&[a]), 4.0 * s);
    assert_eq!(union_perimeter(&[a, DyadicCube { k: 2, i: 2, j: 1 }]), 6.0 * s);
    assert_eq!(union_perimeter(&[a, DyadicCube { k: 2, i: 3, j: 1 }]), 8.0 * s);
    assert_eq!(union_perimeter(&[a, DyadicCube { k: 3, i: 4, j: 2 }]), 5.0 * s);
    assert_eq!(union_perimeter(&[]), 0.0);
}

/// Random disjoint dyadic cubes: leaves of a random quadtree, then a random subset.
fn random_cubes(seed: u64, depth: i32) -> Vec<DyadicCube> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stack = vec![DyadicCube { k: 0, i: 0, j: 0 }];
    let mut leaves = Vec::new();
    while let Some(q) = stack.pop() {
        if q.k < depth && rng.random_bool(0.7) {
            stack.extend(q.children());
        } else if rng.random_bool(0.6) {
            leaves.push(q);
        }
    }
    leaves
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn union_perimeter_matches_raster_count(seed in any::<u64>(), depth in 1i32..6) {
        let cubes = random_cubes(seed, depth);
        prop_assert!((union_perimeter(&cubes) - raster_perimeter(&cubes)).abs() < 1e-12);
    }
}
