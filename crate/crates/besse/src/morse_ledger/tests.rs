use std::f64::consts::PI;

use num_rational::Rational64;
use proptest::prelude::*;

use super::sullivan::{pair_series, Model};
use super::*;
use crate::formal_geodesic::{index_report, FormalGeodesic};
use crate::linalg::{Mat, Vector};

fn r(v: i64) -> Rational64 {
    Rational64::from_integer(v)
}

fn nonzero(s: &PoincareSeries) -> Vec<(usize, i64)> {
    s.integers()
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c != 0)
        .collect()
}

#[test]
fn unit_tangent_tables() {
    let g = unit_tangent_cohomology(Cross::Sphere(4)).unwrap();
    assert_eq!(g.get(0), Degree::free(1));
    assert_eq!(g.get(4), Degree { rank: 0, torsion: vec![2] });
    assert_eq!(g.get(7), Degree::free(1));
    assert!((1..7).filter(|&q| q != 4).all(|q| g.get(q).is_zero()));

    let g = unit_tangent_cohomology(Cross::Sphere(5)).unwrap();
    assert_eq!(g.ranks(), vec![1, 0, 0, 0, 1, 1, 0, 0, 0, 1]);

    // T¹CP²
    let g = unit_tangent_cohomology(Cross::ComplexProjective(2)).unwrap();
    let d: Vec<String> = g.degrees.iter().map(|d| d.describe()).collect();
    assert_eq!(d, ["Z", "0", "Z", "0", "Z_3", "Z", "0", "Z"]);

    let g = unit_tangent_cohomology(Cross::QuaternionicProjective(2)).unwrap();
    assert_eq!(g.get(8).torsion, vec![3]);
    assert_eq!(g.get(4), Degree::free(1));
    assert_eq!(g.get(11), Degree::free(1));
    assert_eq!(g.get(15), Degree::free(1));

    let g = unit_tangent_cohomology(Cross::CayleyPlane).unwrap();
    assert_eq!(g.cap, 31);
    assert_eq!(g.get(16).torsion, vec![3]);
    assert_eq!(g.get(8), Degree::free(1));
    assert_eq!(g.get(23), Degree::free(1));
}

#[test]
fn unit_tangent_is_poincare_dual() {
    for c in Cross::catalogue() {
        let g = unit_tangent_cohomology(c).unwrap();
        let top = g.cap;
        for q in 0..=top {
            assert_eq!(g.get(q).rank, g.get(top - q).rank, "{} q = {q}", c.label());
        }
        // torsion of H^q pairs with torsion of H^{top − q + 1}
        for q in 1..=top {
            assert_eq!(g.get(q).torsion, g.get(top - q + 1).torsion, "{} q = {q}", c.label());
        }
    }
}

#[test]
fn quotient_matches_product_model() {
    for c in Cross::catalogue() {
        let a = gysin_audit(c).unwrap();
        assert!(a.consistent, "{}: {:?}", c.label(), a.cup_ranks);
        assert!(a.windows_exact(), "{}: {:?}", c.label(), a.circle_windows);
        assert!(!a.sphere_windows.is_empty() && !a.circle_windows.is_empty());
        assert!(a.matches_model, "{}: {:?} vs {:?}", c.label(), a.quotient_ranks, a.model_ranks);
        let chi_n: i64 = a.model_ranks.iter().map(|&x| x as i64).sum();
        assert_eq!(a.euler_quotient, chi_n);
        let q = quotient_cohomology(c).unwrap();
        for j in 0..=q.cap {
            assert_eq!(q.get(j).rank, q.get(q.cap - j).rank, "{} q = {j}", c.label());
        }
        assert!(q.is_torsion_free());
        assert!(q.flagged.is_empty());
    }
}

#[test]
fn quaternionic_low_degrees() {
    for m in 1..=3 {
        let q = quotient_cohomology(Cross::QuaternionicProjective(m)).unwrap();
        for j in 0..m {
            assert_eq!(q.get(4 * j).rank, j + 1, "HP^{m} degree {}", 4 * j);
            assert_eq!(q.get(4 * j + 2).rank, j + 1, "HP^{m} degree {}", 4 * j + 2);
        }
    }
}

#[test]
fn cup_with_euler_class_is_injective_below_middle() {
    for c in Cross::catalogue() {
        let a = gysin_audit(c).unwrap();
        let n = c.dim();
        for j in (0..n.saturating_sub(2)).step_by(2) {
            assert_eq!(a.cup_ranks[j] as usize, a.quotient_ranks[j], "{} j = {j}", c.label());
        }
    }
}

#[test]
fn critical_index_formula() {
    assert_eq!(Cross::Sphere(4).critical_index(1), 3);
    assert_eq!(Cross::Sphere(4).critical_index(2), 9);
    assert_eq!(Cross::ComplexProjective(2).critical_index(1), 1);
    assert_eq!(Cross::ComplexProjective(2).critical_index(2), 5);
    assert_eq!(Cross::QuaternionicProjective(2).critical_index(2), 13);
    assert_eq!(Cross::CayleyPlane.critical_index(1), 7);
    for c in Cross::catalogue() {
        assert_eq!(c.critical_index(1), minimal_index(c));
        for k in 1..6 {
            assert_eq!(c.critical_index(k) % 2, (c.dim() + 1) % 2);
        }
    }
}

fn round_geodesic(c: Cross, k: usize) -> FormalGeodesic {
    let (n, a) = (c.dim(), c.generator_degree());
    let m = n - 1;
    // holonomy −1 on the directions of curvature 1 for each lap of length π
    let (diag, twist, len): (Vector, Vector, f64) = match c {
        Cross::Sphere(_) => (
            Vector::from_element(m, 1.0),
            Vector::from_element(m, 1.0),
            2.0 * PI * k as f64,
        ),
        _ => (
            Vector::from_fn(m, |i, _| if i < a - 1 { 4.0 } else { 1.0 }),
            Vector::from_fn(m, |i, _| if i < a - 1 || k % 2 == 0 { 1.0 } else { -1.0 }),
            PI * k as f64,
        ),
    };
    FormalGeodesic::constant(
        &Mat::from_diagonal(&diag),
        &Mat::from_diagonal(&twist),
        len,
        format!("{}-{k}", c.label()),
    )
    .unwrap()
}

#[test]
fn critical_index_matches_jacobi_count() {
    let cases = [
        Cross::Sphere(3),
        Cross::Sphere(4),
        Cross::ComplexProjective(2),
        Cross::ComplexProjective(3),
        Cross::QuaternionicProjective(1),
        Cross::QuaternionicProjective(2),
    ];
    for c in cases {
        for k in 1..=3 {
            let rep = index_report(&round_geodesic(c, k)).unwrap();
            assert_eq!(rep.ind as usize, c.critical_index(k), "{} k = {k}", c.label());
            assert_eq!(rep.nullity, 2 * (c.dim() - 1), "{} k = {k}", c.label());
        }
    }
}

#[test]
fn sphere_series_tables() {
    let s = loopspace_series(Cross::Sphere(3), 10).unwrap();
    assert_eq!(nonzero(&s), vec![(2, 1), (4, 2), (6, 2), (8, 2), (10, 2)]);
    let s = loopspace_series(Cross::Sphere(4), 30).unwrap();
    assert_eq!(
        nonzero(&s.truncate(12)),
        vec![(3, 1), (5, 1), (7, 1), (9, 2), (11, 1)]
    );
    assert_eq!(s.periodicity, Some(Periodicity { period: 6, offset: 4 }));
}

#[test]
fn sphere_formulas_equal_morse_sum() {
    for n in 2..=9 {
        let c = Cross::Sphere(n);
        let cap = 40;
        let table = loopspace_series(c, cap).unwrap();
        let morse = assemble(&critical_model(c, cap).unwrap(), cap).unwrap();
        assert_eq!(table.coeffs, morse.coeffs, "S^{n}");
    }
}

#[test]
fn sullivan_differential_squares_to_zero() {
    for c in Cross::catalogue() {
        for eq in [false, true] {
            let m = Model::loop_space(c, eq).unwrap();
            assert!(m.square_vanishes(), "{} equivariant = {eq}", c.label());
            assert!(m.is_homogeneous(), "{} equivariant = {eq}", c.label());
        }
    }
}

#[test]
fn sullivan_three_sphere() {
    let s = sullivan::equivariant_pair_series(Cross::Sphere(3), 10).unwrap();
    assert_eq!(nonzero(&s), vec![(2, 1), (4, 2), (6, 2), (8, 2), (10, 2)]);
}

#[test]
fn equivariant_perfectness_all_families() {
    let cap = 40;
    for c in Cross::catalogue() {
        let model = critical_model(c, cap).unwrap();
        let oracle = sullivan::equivariant_pair_series(c, cap).unwrap();
        let rep = perfectness_check(&model, &oracle, cap).unwrap();
        assert!(rep.perfect, "{}: {:?}", c.label(), rep.first_failure);
        assert!(rep.lacunary, "{}: {:?}", c.label(), rep.lacunarity_failure);
    }
}

#[test]
fn nonequivariant_perfectness_all_families() {
    let cap = 36;
    for c in Cross::catalogue() {
        let e = unit_tangent_cohomology(c).unwrap().rational_series().truncate(cap);
        let mut sum = PoincareSeries::zero(cap);
        let mut k = 1;
        while c.critical_index(k) <= cap {
            sum = sum.add(&e.shift(c.critical_index(k)));
            k += 1;
        }
        let oracle = pair_series(c, cap).unwrap();
        assert_eq!(sum.coeffs, oracle.coeffs, "{}", c.label());
    }
}

#[test]
fn integral_sphere_table_matches_unit_tangent_sum() {
    // H^*(T¹S^n;ℤ) shifted by i_k, summed over k
    for n in 2..=8 {
        let c = Cross::Sphere(n);
        let cap = 45;
        let g = loopspace_integral(c, cap).unwrap();
        let e = unit_tangent_cohomology(c).unwrap();
        let mut expect = GradedGroup::zero("", cap);
        let mut k = 1;
        while c.critical_index(k) <= cap {
            let i = c.critical_index(k);
            for q in 0..=e.cap {
                if q + i <= cap {
                    let d = e.get(q);
                    expect.degrees[q + i].rank += d.rank;
                    expect.degrees[q + i].torsion.extend(d.torsion);
                }
            }
            k += 1;
        }
        for q in 0..=cap {
            let mut a = g.get(q);
            let mut b = expect.get(q);
            a.torsion.sort();
            b.torsion.sort();
            assert_eq!(a, b, "S^{n} q = {q}");
        }
    }
}

#[test]
fn integral_tables_only_for_spheres() {
    assert!(matches!(
        loopspace_integral(Cross::ComplexProjective(2), 10),
        Err(Error::NotApplicable(_))
    ));
}

#[test]
fn thom_shift_needs_anti_invariant_part() {
    let s = PoincareSeries::from_ints(&[1, 0, 1, 0, 0, 0]);
    assert!(matches!(thom_shift(&s, 2, false, None), Err(Error::InvalidInput(_))));
    let anti = PoincareSeries::from_ints(&[0, 0, 1, 0, 0, 0]);
    let t = thom_shift(&s, 2, false, Some(&anti)).unwrap();
    assert_eq!(t.integers(), vec![0, 0, 0, 0, 1, 0]);
    let t = thom_shift(&s, 2, true, None).unwrap();
    assert_eq!(t.integers(), vec![0, 0, 1, 0, 1, 0]);
}

#[test]
fn perfectness_reports_first_failure() {
    let c = Cross::Sphere(3);
    let cap = 12;
    let mut model = critical_model(c, cap).unwrap();
    let target = loopspace_series(c, cap).unwrap();
    model.entries[1].series.coeffs[2] = r(3);
    let rep = perfectness_check(&model, &target, cap).unwrap();
    assert!(!rep.perfect);
    let f = rep.first_failure.unwrap();
    assert_eq!(f.degree, 8);
    assert_eq!(f.assembled, r(3));
    assert_eq!(f.target, r(2));
}

#[test]
fn lacunarity_detects_wrong_parity() {
    let s = PoincareSeries::from_ints(&[0, 0, 1, 0, 1, 1]);
    assert_eq!(lacunarity_violation(&s, 3), Some(5));
    assert_eq!(lacunarity_violation(&s, 4), Some(2));
}

#[test]
fn truncated_model_is_rejected() {
    let c = Cross::Sphere(3);
    let mut model = critical_model(c, 20).unwrap();
    model.entries.pop();
    let target = loopspace_series(c, 20).unwrap();
    assert!(matches!(perfectness_check(&model, &target, 20), Err(Error::Precondition(_))));
}

#[test]
fn parse_tags() {
    assert_eq!(Cross::parse("CP", 3).unwrap(), Cross::ComplexProjective(3));
    assert_eq!(Cross::parse("S_odd", 5).unwrap(), Cross::Sphere(5));
    assert!(Cross::parse("S_odd", 4).is_err());
    assert!(Cross::parse("RP", 2).is_err());
    assert!(Cross::parse("HP", 0).is_err());
    assert_eq!(Cross::CayleyPlane.tag(), "CaP2");
}

#[test]
fn ledger_report_round_trips() {
    let rep = ledger_report(Cross::ComplexProjective(2), 20).unwrap();
    assert!(rep.perfectness.perfect);
    let js = serde_json::to_string(&rep).unwrap();
    let back: LedgerReport = serde_json::from_str(&js).unwrap();
    assert_eq!(back.loopspace, rep.loopspace);
    assert_eq!(back.model, rep.model);
    assert!(rep.to_text().contains("perfectness to degree 20: exact"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shift_is_additive(v in prop::collection::vec(0usize..5, 12), i in 0usize..6, j in 0usize..6) {
        let s = PoincareSeries::from_ints(&v);
        prop_assert_eq!(s.shift(i).shift(j), s.shift(i + j));
    }

    #[test]
    fn product_ranks_multiply(a in 1usize..4, b in 1usize..4) {
        let f = [Factor::ComplexProjective(a), Factor::ComplexProjective(b)];
        let cap = 2 * (a + b);
        let ranks = product_ranks(&f, cap);
        let pa = PoincareSeries::from_ints(&product_ranks(&f[..1], cap));
        let pb = PoincareSeries::from_ints(&product_ranks(&f[1..], cap));
        prop_assert_eq!(PoincareSeries::from_ints(&ranks), pa.mul(&pb));
    }

    #[test]
    fn morse_series_is_lacunary(idx in 0usize..11, cap in 10usize..50) {
        let c = Cross::catalogue()[idx];
        let s = loopspace_series(c, cap).unwrap();
        prop_assert_eq!(lacunarity_violation(&s, c.dim()), None);
        prop_assert!(s.is_nonnegative_integral());
        prop_assert_eq!(s.lowest_degree(), Some(minimal_index(c)));
    }

    #[test]
    fn indices_increase(idx in 0usize..11, k in 1usize..20) {
        let c = Cross::catalogue()[idx];
        prop_assert!(c.critical_index(k + 1) > c.critical_index(k));
    }
}
