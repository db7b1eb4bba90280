use std::f64::consts::PI;

use proptest::prelude::*;
use snowcount::constants::*;
use snowcount::foliation::closed_form_ranges;
use snowcount::ifs_geometry::{p_max, DomainKind};
use snowcount::Error;

const THIRD: f64 = 1.0 / 3.0;

fn unit_ranges() -> ConstantRanges {
    let one = Range::new(1.0, 1.0);
    ConstantRanges { c_r: one, c_l: one, c_i: one, c_diam: one, c_vol: one }
}

#[test]
fn weyl_constants_and_ball_volumes() {
    assert!((weyl_constant(1) - 1.0 / PI).abs() < 1e-15);
    assert!((weyl_constant(2) - 1.0 / (4.0 * PI)).abs() < 1e-15);
    assert!((weyl_constant(2) - 0.0795775).abs() < 1e-7);
    assert!((weyl_constant(3) - 1.0 / (6.0 * PI * PI)).abs() < 1e-15);
    assert!((unit_ball_volume(1) - 2.0).abs() < 1e-15);
    assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
    assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
}

#[test]
fn special_functions_against_tabulated_values() {
    assert!((bessel_j(0.0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-13);
    assert!((bessel_j(1.0, 2.5) - 0.497_094_102_464_274_1).abs() < 1e-13);
    for x in [0.3, 1.7, 6.0, 11.0] {
        let closed = (2.0 / (PI * x)).sqrt() * x.sin();
        assert!((bessel_j(0.5, x) - closed).abs() < 1e-12, "x = {x}");
    }
    assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-15);
    assert_eq!(gamma(5.0), 24.0);
    assert!((gamma(1.3) - 0.897_470_696_306_277_2).abs() < 1e-13);
    let (x, v) = golden_section_min(|x| (x - 2.0).powi(2) + 1.0, -5.0, 5.0, 1e-10);
    assert!((x - 2.0).abs() < 1e-6 && (v - 1.0).abs() < 1e-12);
}

#[test]
fn weinberger_roots_and_bounds() {
    assert!((weinberger_root(1).unwrap() - PI / 2.0).abs() < 1e-10);
    assert!((weinberger_root(2).unwrap() - 1.841_183_781_340_659).abs() < 1e-10);
    assert!((weinberger_root(3).unwrap() - 2.081_575_977_818_101).abs() < 1e-10);
    let disk = weinberger_upper(PI, 2).unwrap();
    assert!((disk - 3.390).abs() < 1e-3);
    assert!((weinberger_upper(4.0 * PI, 2).unwrap() - disk / 4.0).abs() < 1e-13);
    assert!(matches!(weinberger_upper(0.0, 2), Err(Error::Domain(_))));
}

#[test]
fn base_box_constant() {
    let rohde = c_e_rohde(THIRD);
    assert!((rohde - 4.0 * PI * PI / 147.0).abs() < 1e-14);
    assert!((rohde - 0.2686).abs() < 1e-4);
    assert!((c_e_rohde(0.2500001) - PI * PI).abs() < 1e-12);
    for i in 1..400 {
        let p = 0.25 + (p_max() - 0.25) * i as f64 / 400.0;
        let (cert, pub_) = (c_e_certified(p), c_e_rohde(p));
        assert!(cert > 0.0 && cert.is_finite());
        assert!(pub_ > 0.0 && pub_.is_finite());
        assert!(cert <= pub_ * (1.0 + 1e-12) || p < 0.32, "p = {p}: {cert} vs {pub_}");
    }
    assert!((c_e_certified(THIRD) - rohde).abs() < 1e-12);
    assert!(c_e_certified(0.27) < 0.6 * c_e_rohde(0.27));
}

#[test]
fn c1_of_the_unit_certificate_is_one_fifth() {
    let r = unit_ranges();
    assert_eq!(c1_alpha(&r, 1.0), 1.0);
    assert!((c1(&r, 1.0, 1.0) - 0.2).abs() < 1e-15);
    let (opt, alpha) = c1_optimized(&r, 1.0, 1.0);
    assert!(opt >= 0.2);
    assert!((alpha - 1.0).abs() < 1e-4, "bracket 3 + α + 1 + 1/α is minimal at α = 1");
}

#[test]
fn c1_vanishes_at_the_end_of_the_parameter_range() {
    let at = |p: f64| c1(&closed_form_ranges(p).unwrap(), c_e_certified(p), 1.0);
    let mut prev = f64::INFINITY;
    for i in 0..=10 {
        let p = 0.34 + (p_max() - 1e-6 - 0.34) * i as f64 / 10.0;
        let v = at(p);
        assert!(v > 0.0 && v < prev, "p = {p}: {v}");
        prev = v;
    }
    assert!(at(p_max() - 1e-6) < 1e-3 * at(THIRD));
}

#[test]
fn lemma_bound_optimum_beats_a_grid() {
    let (best, alpha) = lemma_bound_optimized(3.0, 0.1, 0.7, 1.4, 1.0, 1.0);
    let grid = (-400..=400).map(|i| lemma_bound(3.0, 0.1, 0.7, 1.4, 1.0, 1.0, (i as f64 / 40.0).exp())).fold(0.0, f64::max);
    assert!(best >= grid * (1.0 - 1e-12));
    assert!((best - lemma_bound(3.0, 0.1, 0.7, 1.4, 1.0, 1.0, alpha)).abs() < 1e-14);
}

#[test]
fn perimeter_constant() {
    let d = 1.3;
    let want = 4.0 * (2.0 * 2f64.sqrt()).powf(d - 1.0) * 2.0 * (1.0 + 2f64.powf(d - 1.0) + 2f64.powf(2.0 * (d - 1.0)));
    assert!((a_omega(2, d, 2.0) - want).abs() < 1e-12);
}

#[test]
fn classic_ledger() {
    let l = domain_ledger(DomainKind::TriangleK, THIRD).unwrap();
    for (name, v) in [
        ("c1", l.c1),
        ("c2", l.c2),
        ("c3", l.c3),
        ("m_omega", l.m_omega),
        ("m_frak", l.m_frak),
        ("a_omega", l.a_omega),
        ("c_tilde", l.c_tilde),
        ("t0", l.t0),
    ] {
        assert!(v > 0.0 && v.is_finite(), "{name} = {v}");
    }
    assert!(l.c1_optimized >= l.c1);
    assert!(!l.proof_variant_exceeds());
    assert!(l.c1 >= 0.0030 && l.c1 <= 0.0031);
    let geo = 2f64.powf(l.delta) - 1.0;
    assert!((l.c3 - (1.0 + l.m_frak * (40.0 * 2f64.sqrt()).powf(l.delta) / geo)).abs() < 1e-9);
    assert!((l.s1_coefficient - l.c3 * (3.0 / l.c2).powf(l.delta / 2.0)).abs() < 1e-9 * l.s1_coefficient);
    assert_eq!(l.weyl.len(), 2);
    assert!(matches!(domain_ledger(DomainKind::TriangleK, 0.3), Err(Error::Unsupported(_))));
}

#[test]
fn remainder_coefficient_diverges_near_the_end_of_the_range() {
    let ps = [0.34, 0.35, 0.36, 0.365];
    let m: Vec<f64> = ps.iter().map(|&p| domain_ledger(DomainKind::SquareR, p).unwrap().m_omega).collect();
    assert!(m.windows(2).all(|w| w[1] > w[0]), "{m:?}");
    assert!(m[3] > 10.0 * m[0], "{m:?}");
}

#[test]
fn validation_lists_every_bad_input() {
    let mut inp = domain_inputs(DomainKind::SquareR, 0.3).unwrap();
    inp.c_e = 0.0;
    inp.vol = -1.0;
    inp.m_frak = f64::NAN;
    let Err(Error::Precondition(msg)) = ledger_from_inputs(&inp) else { panic!("expected a precondition error") };
    for key in ["c_E", "vol", "M_frak"] {
        assert!(msg.contains(key), "{msg}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn ledger_scales_under_dilation(alpha in 0.1f64..10.0) {
        let inp = domain_inputs(DomainKind::SquareR, THIRD).unwrap();
        let a = ledger_from_inputs(&inp).unwrap();
        let b = ledger_from_inputs(&inp.scaled(alpha)).unwrap();
        let ad = alpha.powf(a.delta);
        let close = |x: f64, y: f64| (x / y - 1.0).abs() < 1e-12;
        prop_assert!(close(b.c1, a.c1) && close(b.c2, a.c2));
        prop_assert!(close(b.c3, a.c3 * ad));
        prop_assert!(close(b.s1_coefficient, a.s1_coefficient * ad));
        prop_assert!(close(b.m_omega, a.m_omega * ad));
        prop_assert!(close(b.t0, a.t0 / (alpha * alpha)));
    }

    #[test]
    fn optimized_c1_dominates_the_closed_form(p in 0.26f64..0.366) {
        let r = closed_form_ranges(p).unwrap();
        let ce = c_e_certified(p);
        prop_assert!(c1_optimized(&r, ce, 1.0).0 >= c1(&r, ce, 1.0) * (1.0 - 1e-12));
    }
}
