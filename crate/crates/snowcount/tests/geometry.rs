use proptest::prelude::*;
use snowcount::distance::SegmentQuadtree;
use snowcount::ifs_geometry::*;
use snowcount::point::{point_in_polygon, point_segment, polygon_area};
use snowcount::{Error, Point};

const S3: f64 = 1.732_050_807_568_877_2;

/// Series oracle: sum of all bump triangles added over the generations.
fn area_by_bump_sum(kind: DomainKind, p: f64) -> f64 {
    let h = (4.0 * p - 1.0).sqrt() / 2.0;
    let mut total = kind.base_area();
    let mut count = kind.sides() as f64;
    let mut len = 1.0;
    for _ in 0..200 {
        total += count * 0.5 * (1.0 - 2.0 * p) * len * h * len;
        count *= 4.0;
        len *= p;
    }
    total
}

#[test]
fn classic_dimension_and_apex() {
    let sys = make_p_koch(1.0 / 3.0).unwrap();
    assert!((sys.delta - 4f64.ln() / 3f64.ln()).abs() < 1e-15);
    assert!((sys.delta - 1.26186).abs() < 1e-5);
    assert!((sys.bump_height() - 1.0 / (2.0 * S3)).abs() < 1e-15);
    assert!((sys.bump_height() - 0.28868).abs() < 1e-5);
    let h = sys.bump_height();
    assert!(((0.5 - sys.p).powi(2) + h * h - sys.p * sys.p).abs() < 1e-15);
}

#[test]
fn parameter_range_is_enforced() {
    assert!(matches!(make_p_koch(0.24), Err(Error::Domain(_))));
    assert!(matches!(make_p_koch(0.25), Err(Error::Domain(_))));
    assert!(matches!(make_p_koch(p_max()), Err(Error::Domain(_))));
    assert!(make_p_koch(0.3).is_ok());
}

#[test]
fn level_zero_and_one_chains() {
    let sys = make_p_koch(1.0 / 3.0).unwrap();
    let c0 = iterate_chain(&sys, 0).unwrap();
    assert_eq!(c0.vertices, vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]);
    assert!((c0.hausdorff_error - (1.0f64 / 3.0).sqrt() / 2.0 / (2.0 / 3.0)).abs() < 1e-15);
    assert!((c0.hausdorff_error - 0.433).abs() < 1e-3);
    let c1 = iterate_chain(&sys, 1).unwrap();
    let want = [(0.0, 0.0), (1.0 / 3.0, 0.0), (0.5, 1.0 / (2.0 * S3)), (2.0 / 3.0, 0.0), (1.0, 0.0)];
    assert_eq!(c1.vertices.len(), 5);
    for (v, w) in c1.vertices.iter().zip(want) {
        assert!(v.dist(Point::new(w.0, w.1)) < 1e-15, "{v:?} vs {w:?}");
    }
    for p in [0.26, 0.3, 0.35] {
        let s = make_p_koch(p).unwrap();
        assert_eq!(iterate_chain(&s, 0).unwrap().vertices, vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]);
        assert_eq!(iterate_chain(&s, 3).unwrap().vertices.len(), 4usize.pow(3) + 1);
    }
}

#[test]
fn chain_budget_is_enforced() {
    let sys = make_p_koch(1.0 / 3.0).unwrap();
    assert!(matches!(iterate_chain_with_budget(&sys, 6, 1000), Err(Error::Resource(_))));
    assert!(matches!(iterate_chain(&sys, 40), Err(Error::Resource(_))));
}

#[test]
fn exact_areas_match_series_oracle() {
    let k = area_exact(DomainKind::TriangleK, 1.0 / 3.0);
    assert!((k - 2.0 * S3 / 5.0).abs() < 1e-14);
    assert!((k - 0.69282).abs() < 1e-5);
    let r = area_exact(DomainKind::SquareR, 1.0 / 3.0);
    assert!((r - (1.0 + S3 / 5.0)).abs() < 1e-14);
    for p in [0.26, 0.3, 1.0 / 3.0, 0.36] {
        for kind in [DomainKind::TriangleK, DomainKind::SquareR] {
            assert!((area_exact(kind, p) - area_by_bump_sum(kind, p)).abs() < 1e-13);
        }
    }
}

#[test]
fn level_zero_triangle() {
    let d = build_snowflake(DomainKind::TriangleK, 1.0 / 3.0, 0).unwrap();
    assert_eq!(d.polygon().len(), 3);
    assert!((d.polygon_area() - S3 / 4.0).abs() < 1e-15);
}

#[test]
fn level_eight_polygon_area_and_monte_carlo() {
    let d = build_snowflake(DomainKind::TriangleK, 1.0 / 3.0, 8).unwrap();
    let a = d.polygon_area();
    assert!(a <= d.area_exact && d.area_exact - a <= area_error_bound(DomainKind::TriangleK, 1.0 / 3.0, 8) * (1.0 + 1e-9));
    let poly = d.polygon();
    let bb = d.bounding_box();
    let e = bb.extent();
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let n = 20_000;
    let hits = (0..n)
        .filter(|_| point_in_polygon(&poly, Point::new(bb.min.x + rng.random::<f64>() * e.x, bb.min.y + rng.random::<f64>() * e.y)))
        .count();
    let frac = hits as f64 / n as f64;
    let est = frac * e.x * e.y;
    let sigma = (frac * (1.0 - frac) / n as f64).sqrt() * e.x * e.y;
    assert!((est - d.area_exact).abs() < 4.0 * sigma, "{est} vs {}", d.area_exact);
}

#[test]
fn polygon_area_converges_upward() {
    for kind in [DomainKind::TriangleK, DomainKind::SquareR] {
        for p in [0.27, 0.3, 1.0 / 3.0] {
            let mut prev = 0.0;
            for m in 0..7 {
                let d = build_snowflake(kind, p, m).unwrap();
                let a = d.polygon_area();
                assert!(a > prev);
                assert!(d.area_exact - a >= -1e-14);
                let tail = area_error_bound(kind, p, m);
                assert!((d.area_exact - a - tail).abs() <= 1e-12 + 1e-9 * tail, "missing area is exactly the bump tail");
                prev = a;
            }
        }
    }
}

#[test]
fn boundary_is_simple_and_counter_clockwise() {
    for kind in [DomainKind::TriangleK, DomainKind::SquareR] {
        for p in [0.26, 0.3, 1.0 / 3.0, 0.36] {
            let d = build_snowflake(kind, p, 4).unwrap();
            d.check_simple().unwrap();
            assert!(polygon_area(&d.polygon()) > kind.base_area());
        }
    }
}

#[test]
fn exports() {
    let d = build_snowflake(DomainKind::SquareR, 0.3, 1).unwrap();
    let mut buf = Vec::new();
    d.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y"));
    assert_eq!(lines.count(), d.polygon().len());
    let j = d.to_json();
    for key in ["kind", "p", "level", "hausdorff_error", "vertices"] {
        assert!(j.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn convex_hull_of_square_with_interior_points() {
    let pts = [(0.0, 0.0), (1.0, 0.0), (0.5, 0.5), (1.0, 1.0), (0.0, 1.0), (0.2, 0.7)].map(|(x, y)| Point::new(x, y));
    assert_eq!(convex_hull(&pts).len(), 4);
    let bowtie = [(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)].map(|(x, y)| Point::new(x, y));
    assert!(first_self_intersection(&bowtie).is_some());
}

fn brute_distance(poly: &[Point], q: Point) -> f64 {
    (0..poly.len()).map(|i| point_segment(q, poly[i], poly[(i + 1) % poly.len()]).1).fold(f64::INFINITY, f64::min)
}

proptest! {
    #[test]
    fn word_maps_contract_by_p_to_the_k(word in prop::collection::vec(0usize..4, 1..8), p in 0.26f64..0.36,
                                        a in (-2.0f64..2.0, -2.0f64..2.0), b in (-2.0f64..2.0, -2.0f64..2.0)) {
        let sys = make_p_koch(p).unwrap();
        let m = sys.word_map(&word);
        let (a, b) = (Point::new(a.0, a.1), Point::new(b.0, b.1));
        prop_assume!(a.dist(b) > 1e-3);
        let ratio = m.apply(a).dist(m.apply(b)) / a.dist(b);
        prop_assert!((ratio / p.powi(word.len() as i32) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn similarity_inverse_round_trips(s in 0.1f64..3.0, rot in -3.0f64..3.0, refl: bool, tx in -1.0f64..1.0, ty in -1.0f64..1.0,
                                      x in -5.0f64..5.0, y in -5.0f64..5.0) {
        let m = Similarity::new(s, rot, refl, Point::new(tx, ty)).unwrap();
        let q = Point::new(x, y);
        prop_assert!(m.inverse().apply(m.apply(q)).dist(q) < 1e-11);
    }

    #[test]
    fn hausdorff_error_bounds_finer_chains(p in 0.26f64..0.36, m in 0u32..3) {
        let sys = make_p_koch(p).unwrap();
        let coarse = iterate_chain(&sys, m).unwrap();
        let fine = iterate_chain(&sys, m + 4).unwrap();
        let worst = fine.vertices.iter().map(|&v| {
            coarse.vertices.windows(2).map(|w| point_segment(v, w[0], w[1]).1).fold(f64::INFINITY, f64::min)
        }).fold(0.0, f64::max);
        prop_assert!(worst <= coarse.hausdorff_error * (1.0 + 1e-12));
    }

    #[test]
    fn quadtree_distance_matches_brute_force(x in -0.5f64..1.5, y in -0.6f64..1.5, p in 0.26f64..0.36) {
        let d = build_snowflake(DomainKind::TriangleK, p, 3).unwrap();
        let poly = d.polygon();
        let tree = SegmentQuadtree::new(poly.clone());
        let q = Point::new(x, y);
        let sd = tree.signed_distance(q);
        prop_assert!((sd.abs() - brute_distance(&poly, q)).abs() < 1e-12);
        if sd.abs() > 1e-9 {
            prop_assert_eq!(sd > 0.0, point_in_polygon(&poly, q));
        }
    }
}
