use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowcount::constants::{domain_ledger, weinberger_upper};
use snowcount::counting::Boundary;
use snowcount::eigensolver::*;
use snowcount::foliation::{build_cover, j_interval, ElementKind};
use snowcount::ifs_geometry::{build_snowflake, make_p_koch, DomainKind};
use snowcount::point::{Aabb, Point};
use snowcount::Error;

/// Cell-centred discrete Neumann spectrum of an `nx × ny` rectangle of cells.
fn neumann_rect_oracle(nx: usize, ny: usize, h: f64) -> Vec<f64> {
    let s = |i: usize, n: usize| (PI * i as f64 / (2.0 * n as f64)).sin().powi(2);
    let mut v: Vec<f64> = (0..nx).flat_map(|i| (0..ny).map(move |j| 4.0 / (h * h) * (s(i, nx) + s(j, ny)))).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Cell-centred discrete Dirichlet spectrum of an `nx × ny` rectangle of cells.
fn dirichlet_rect_oracle(nx: usize, ny: usize, h: f64) -> Vec<f64> {
    let s = |i: usize, n: usize| (PI * i as f64 / (2.0 * n as f64)).sin().powi(2);
    let mut v: Vec<f64> = (1..=nx).flat_map(|i| (1..=ny).map(move |j| 4.0 / (h * h) * (s(i, nx) + s(j, ny)))).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn two_squares(h: f64) -> GridMask {
    let bb = Aabb { min: Point::new(0.0, 0.0), max: Point::new(3.0, 1.0) };
    GridMask::from_predicate(bb, h, |q| q.x < 1.0 || q.x > 2.0).unwrap()
}

#[test]
fn two_cell_chain() {
    let h = 0.5;
    let mask = GridMask::rectangle(1.0, 0.5, h).unwrap();
    assert_eq!(mask.count(), 2);
    let op = assemble_neumann(&mask).unwrap();
    assert_eq!(op.get(0, 0), 1.0 / (h * h));
    assert_eq!(op.get(0, 1), -1.0 / (h * h));
    let r = smallest_eigs(&op, 2, DEFAULT_TOL).unwrap();
    assert_eq!(r.eigenvalues[0], 0.0);
    assert!((r.eigenvalues[1] - 2.0 / (h * h)).abs() < 1e-10);
}

#[test]
fn constants_are_in_the_kernel_and_the_operator_is_symmetric() {
    let mask = GridMask::disk(1.0, 0.1).unwrap();
    let op = assemble_neumann(&mask).unwrap();
    assert!(op.apply(&vec![3.7; op.n]).iter().all(|x| x.abs() < 1e-10));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u: Vec<f64> = (0..op.n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..op.n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (au, av) = (op.apply(&u), op.apply(&v));
    assert!((dot(&au, &v) - dot(&u, &av)).abs() < 1e-12 * dot(&au, &au).sqrt() * dot(&v, &v).sqrt());
    for r in 0..op.n.min(200) {
        for c in 0..op.n.min(200) {
            assert_eq!(op.get(r, c), op.get(c, r));
        }
    }
}

#[test]
fn rectangle_matches_the_discrete_closed_form() {
    let h = 1.0 / 16.0;
    let mask = GridMask::rectangle(2.0, 1.0, h).unwrap();
    let want = neumann_rect_oracle(32, 16, h);
    let got = smallest_eigs(&assemble_neumann(&mask).unwrap(), 8, DEFAULT_TOL).unwrap();
    for (g, w) in got.eigenvalues.iter().zip(&want) {
        assert!((g - w).abs() < 1e-6 * w.max(1.0), "{g} vs {w}");
    }
    assert!((got.eigenvalues[1] - PI * PI / 4.0).abs() < 0.01);
    let want_d = dirichlet_rect_oracle(32, 16, h);
    let got_d = smallest_eigs(&assemble_dirichlet(&mask).unwrap(), 6, DEFAULT_TOL).unwrap();
    for (g, w) in got_d.eigenvalues.iter().zip(&want_d) {
        assert!((g - w).abs() < 1e-6 * w, "{g} vs {w}");
    }
}

#[test]
fn rayleigh_quotients_and_residuals() {
    let op = assemble_neumann(&GridMask::disk(1.0, 1.0 / 24.0).unwrap()).unwrap();
    let r = smallest_eigs(&op, 5, DEFAULT_TOL).unwrap();
    assert_eq!(r.vectors.len(), 5);
    assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]), "{:?}", r.eigenvalues);
    for (i, (l, v)) in r.eigenvalues.iter().zip(&r.vectors).enumerate() {
        let scale = r.eigenvalues[4];
        assert!(r.residuals[i] <= 1e-6 * scale, "residual {} at {i}", r.residuals[i]);
        assert!((op.rayleigh(v) - l).abs() <= r.residuals[i] + 1e-9 * scale);
    }
}

#[test]
fn disjoint_squares_double_the_spectrum() {
    let h = 1.0 / 8.0;
    let mask = two_squares(h);
    assert!(!mask.is_connected());
    assert!(matches!(assemble_neumann(&mask), Err(Error::Precondition(_))));
    let n = smallest_eigs_components(&mask, Boundary::Neumann, 6, DEFAULT_TOL).unwrap();
    let one = neumann_rect_oracle(8, 8, h);
    let mut want: Vec<f64> = one.iter().chain(&one).copied().collect();
    want.sort_by(f64::total_cmp);
    assert_eq!(n[0], 0.0);
    assert_eq!(n[1], 0.0);
    for (g, w) in n.iter().zip(&want) {
        assert!((g - w).abs() < 1e-6 * w.max(1.0), "{g} vs {w}");
    }
    let d = smallest_eigs_components(&mask, Boundary::Dirichlet, 4, DEFAULT_TOL).unwrap();
    let one_d = dirichlet_rect_oracle(8, 8, h);
    assert!((d[0] - one_d[0]).abs() < 1e-6 * one_d[0] && (d[1] - one_d[0]).abs() < 1e-6 * one_d[0]);
    let t = 60.0;
    let per_square = one.iter().filter(|&&l| l <= t).count();
    let all = smallest_eigs_components(&mask, Boundary::Neumann, 2 * per_square + 2, DEFAULT_TOL).unwrap();
    assert_eq!(all.iter().filter(|&&l| l <= t).count(), 2 * per_square);
}

#[test]
fn preconditions() {
    let bb = Aabb { min: Point::new(0.0, 0.0), max: Point::new(1.0, 1.0) };
    let empty = GridMask::from_predicate(bb, 0.25, |_| false).unwrap();
    assert!(matches!(assemble_neumann(&empty), Err(Error::Precondition(_))));
    assert!(matches!(assemble_dirichlet(&empty), Err(Error::Precondition(_))));
    assert!(matches!(GridMask::rectangle(1.0, 1.0, 0.0), Err(Error::Domain(_))));
    let op = assemble_neumann(&GridMask::rectangle(1.0, 1.0, 0.25).unwrap()).unwrap();
    assert!(matches!(smallest_eigs(&op, 0, DEFAULT_TOL), Err(Error::Precondition(_))));
    assert!(matches!(smallest_eigs(&op, 17, DEFAULT_TOL), Err(Error::Precondition(_))));
    let mask = two_squares(0.25);
    assert!(matches!(mask.keep_component_containing(Point::new(1.5, 0.5)), Err(Error::Precondition(_))));
    let kept = mask.keep_component_containing(Point::new(2.5, 0.5)).unwrap();
    assert_eq!(kept.count(), 16);
    assert!(kept.is_connected());
}

#[test]
fn disk_respects_the_weinberger_bound() {
    let bound = weinberger_upper(PI, 2).unwrap();
    let e = lambda2_extrapolated(|h| GridMask::disk(1.0, h), 1.0 / 32.0, DEFAULT_TOL).unwrap();
    assert_eq!(richardson(e.coarse, e.fine), e.extrapolated);
    assert!((e.extrapolated / bound - 1.0).abs() < 0.02, "{e:?} vs {bound}");
    assert!(e.coarse <= bound * 1.02 && e.fine <= bound * 1.02);
}

#[test]
fn square_converges_at_second_order() {
    let pi2 = PI * PI;
    let err = |h: f64| {
        let op = assemble_neumann(&GridMask::rectangle(1.0, 1.0, h).unwrap()).unwrap();
        (smallest_eigs(&op, 2, DEFAULT_TOL).unwrap().eigenvalues[1] - pi2).abs()
    };
    let (a, b) = (err(1.0 / 8.0), err(1.0 / 16.0));
    assert!(((a / b).log2() - 2.0).abs() < 0.2);
    let e = lambda2_extrapolated(|h| GridMask::rectangle(1.0, 1.0, h), 1.0 / 16.0, DEFAULT_TOL).unwrap();
    assert!((e.extrapolated / pi2 - 1.0).abs() < 1e-3);
}

#[test]
fn fringed_element_eigenvalue_and_poincare() {
    let p = 1.0 / 3.0;
    let (lo, hi) = j_interval(p, 2);
    let eps = 0.5 * (lo + hi);
    let sys = make_p_koch(p).unwrap();
    let dom = build_snowflake(DomainKind::TriangleK, p, 4).unwrap();
    let cert = build_cover(&dom, eps).unwrap();
    let e = cert.elements.iter().find(|e| e.kind == ElementKind::FringedRect).expect("fringed element");
    let mask = rasterize_element(e, &sys, 48, 6).unwrap();
    assert!(mask.is_connected());
    let rep = poincare_check(e, &mask, 100, 3).unwrap();
    assert_eq!(rep.trials, 100);
    assert!(rep.passes(), "{rep:?}");
    assert!(rep.eigenvector_ratio >= 1.0 / rep.lambda2 * (1.0 - 1e-9));
    let c1 = domain_ledger(DomainKind::TriangleK, p).unwrap().c1;
    assert!(rep.lambda2 >= 1.05 * c1 / (eps * eps), "{} vs {}", rep.lambda2, c1 / (eps * eps));
    assert!(matches!(poincare_check(e, &mask, 0, 3), Err(Error::Precondition(_))));
    assert_eq!(rep, poincare_check(e, &mask, 100, 3).unwrap());
}

#[test]
fn field_csv() {
    let mask = GridMask::rectangle(1.0, 0.5, 0.5).unwrap();
    let mut buf = Vec::new();
    write_field_csv(&mut buf, &mask, &[1.0, -1.0]).unwrap();
    let s = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines, ["x,y,value", "0.25,0.25,1.0", "0.75,0.25,-1.0"]);
    assert!(matches!(write_field_csv(Vec::new(), &mask, &[1.0]), Err(Error::Precondition(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn random_rectangles_match_the_closed_form(nx in 2usize..20, ny in 2usize..20) {
        let h = 0.1;
        let mask = GridMask::rectangle(nx as f64 * h, ny as f64 * h, h).unwrap();
        prop_assert_eq!(mask.count(), nx * ny);
        let m = 4.min(nx * ny);
        let got = smallest_eigs(&assemble_neumann(&mask).unwrap(), m, DEFAULT_TOL).unwrap();
        let want = neumann_rect_oracle(nx, ny, h);
        for (g, w) in got.eigenvalues.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-6 * w.max(1.0), "{} vs {}", g, w);
        }
    }
}
