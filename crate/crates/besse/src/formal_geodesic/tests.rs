use super::*;
use crate::random::{random_orthogonal, random_sp_algebra, rng};
use proptest::prelude::*;
use rand::Rng;

fn scalar(m: usize, c: f64) -> Mat {
    Mat::identity(m, m) * c
}

fn nine_quarters(m: usize) -> FormalGeodesic {
    FormalGeodesic::constant(&scalar(m, 2.25), &Mat::identity(m, m), 2.0 * PI, "9/4").unwrap()
}

fn rot(s: f64) -> Mat {
    Mat::from_row_slice(2, 2, &[s.cos(), -s.sin(), s.sin(), s.cos()])
}

fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let (n, k) = (a.nrows(), b.nrows());
    let mut d = Mat::zeros(n + k, n + k);
    d.view_mut((0, 0), (n, n)).copy_from(a);
    d.view_mut((n, n), (k, k)).copy_from(b);
    d
}

// closed-form propagator of J″ + diag(ω²) J = 0
fn harmonic_phi(omegas: &[f64], t: f64) -> Mat {
    let m = omegas.len();
    let mut phi = Mat::zeros(2 * m, 2 * m);
    for (i, &w) in omegas.iter().enumerate() {
        let (c, s) = ((w * t).cos(), (w * t).sin());
        let (s_over, ws) = if w == 0.0 { (t, 0.0) } else { (s / w, w * s) };
        phi[(i, i)] = c;
        phi[(i, m + i)] = s_over;
        phi[(m + i, i)] = -ws;
        phi[(m + i, m + i)] = c;
    }
    phi
}

fn random_profile(seed: u64, m: usize, pieces: usize) -> CurvatureProfile {
    let mut r = rng(seed);
    let len = 2.0 * PI;
    let ts: Vec<f64> = (0..=pieces)
        .map(|k| len * k as f64 / pieces as f64)
        .collect();
    let vals: Vec<Mat> = (0..pieces)
        .map(|_| {
            let q = random_orthogonal(&mut r, m);
            let w: Vec<f64> = (0..m).map(|_| 0.4 + r.gen::<f64>()).collect();
            &q * Mat::from_diagonal(&Vector::from_iterator(m, w.iter().map(|x| x * x)))
                * q.transpose()
        })
        .collect();
    CurvatureProfile::piecewise_constant(&ts, &vals).unwrap()
}

fn random_fg(seed: u64, m: usize) -> FormalGeodesic {
    let mut r = rng(seed ^ 0x5eed);
    FormalGeodesic::new(
        random_profile(seed, m, 3),
        random_orthogonal(&mut r, m),
        "random",
    )
    .unwrap()
}

#[test]
fn sine_vanishes_at_pi() {
    let fg = FormalGeodesic::constant(&scalar(1, 1.0), &scalar(1, 1.0), 2.0 * PI, "").unwrap();
    let y = propagate(&fg, &[0.0, 1.0], 0.0, PI).unwrap();
    assert!(y[0].abs() < 1e-10);
}

#[test]
fn flat_field_is_constant() {
    let fg = FormalGeodesic::constant(&scalar(1, 0.0), &scalar(1, 1.0), 2.0 * PI, "").unwrap();
    let y = propagate(&fg, &[1.0, 0.0], 0.0, 5.0).unwrap();
    assert!((y[0] - 1.0).abs() < 1e-12 && y[1].abs() < 1e-12);
}

#[test]
fn nine_quarters_propagator_is_minus_identity() {
    let path = fundamental_solution(&nine_quarters(2)).unwrap();
    assert!(max_abs(&(path.last() + Mat::identity(4, 4))) < 1e-9);
    assert!(path.max_defect < 1e-9);
    // stored states against the closed form
    for (t, s) in path.ts.iter().zip(&path.states) {
        assert!(
            max_abs(&(s - harmonic_phi(&[1.5, 1.5], *t))) < 1e-9,
            "t = {t}"
        );
    }
}

#[test]
fn harmonic_oracle_for_distinct_frequencies() {
    let om = [0.7, 1.3, 2.9];
    let r = Mat::from_diagonal(&Vector::from_iterator(3, om.iter().map(|w| w * w)));
    let fg = FormalGeodesic::constant(&r, &Mat::identity(3, 3), 5.0, "").unwrap();
    let p = poincare_map(&fg).unwrap();
    assert!(max_abs(&(p.matrix.matrix() - harmonic_phi(&om, 5.0))) < 1e-9);
}

#[test]
fn backward_propagation_inverts_forward() {
    let fg = random_fg(3, 2);
    let init = [0.3, -0.2, 1.0, 0.5];
    let fwd = propagate(&fg, &init, 0.5, 5.5).unwrap();
    let back = propagate(&fg, fwd.as_slice(), 5.5, 0.5).unwrap();
    for i in 0..4 {
        assert!((back[i] - init[i]).abs() < 1e-9);
    }
}

#[test]
fn round_sphere_map_is_identity() {
    for m in 1..=3 {
        let p = poincare_map(&FormalGeodesic::round_sphere_block(m)).unwrap();
        assert!(max_abs(&(p.matrix.matrix() - Mat::identity(2 * m, 2 * m))) < 1e-9);
    }
}

#[test]
fn nine_quarters_map_is_minus_identity() {
    let p = poincare_map(&nine_quarters(2)).unwrap();
    assert!(max_abs(&(p.matrix.matrix() + Mat::identity(4, 4))) < 1e-9);
}

#[test]
fn exemplar_map_matches_b() {
    let p = poincare_map(&exemplar_q()).unwrap();
    assert!(max_abs(&(p.matrix.matrix() - exemplar_b())) < 1e-9);
}

#[test]
fn twisted_exemplar_family() {
    let q = exemplar_q();
    for &s in &[0.0, 0.4, 1.0, 2.5, PI] {
        let fg = FormalGeodesic::new(q.profile().clone(), rot(-s), "Q_s").unwrap();
        let p = poincare_map(&fg).unwrap();
        let expect = block_diag(&rot(s), &rot(s)) * exemplar_b();
        assert!(max_abs(&(p.matrix.matrix() - expect)) < 1e-9, "s = {s}");
    }
}

#[test]
fn concat_with_flat_block_applies_free_propagator() {
    let fg = random_fg(11, 2);
    let len = 1.7;
    let flat =
        FormalGeodesic::constant(&Mat::zeros(2, 2), &Mat::identity(2, 2), len, "flat").unwrap();
    let a = fg.twist().clone();
    let (joined, defect) = concat_verified(&[fg.clone(), flat], &a).unwrap();
    assert!(defect < 1e-8);
    assert!((joined.length() - fg.length() - len).abs() < 1e-12);
    let mut free = Mat::identity(4, 4);
    free.view_mut((0, 2), (2, 2)).copy_from(&scalar(2, len));
    let direct = delta(&a) * poincare_map(&joined).unwrap().matrix.into_matrix();
    let composed = free * delta(&a) * poincare_map(&fg).unwrap().matrix.into_matrix();
    assert!(max_abs(&(direct - composed)) < 1e-9);
}

#[test]
fn padding_by_four_and_one_preserves_map() {
    let fg = exemplar_q();
    let four =
        FormalGeodesic::constant(&scalar(2, 4.0), &Mat::identity(2, 2), 2.0 * PI, "4Id").unwrap();
    let one = FormalGeodesic::round_sphere_block(2);
    let (padded, _) = concat_verified(&[fg.clone(), four, one], &Mat::identity(2, 2)).unwrap();
    assert!((padded.length() - 6.0 * PI).abs() < 1e-12);
    let p0 = poincare_map(&fg).unwrap();
    let p1 = poincare_map(&padded).unwrap();
    assert!(max_abs(&(p0.matrix.matrix() - p1.matrix.matrix())) < 1e-8);
    assert_eq!(padded.profile().eval(3.0 * PI), scalar(2, 4.0));
}

#[test]
fn concat_is_associative() {
    let (a, b, c) = (random_fg(1, 2), random_fg(2, 2), random_fg(3, 2));
    let id = Mat::identity(2, 2);
    let left = concat(
        &[concat(&[a.clone(), b.clone()], &id).unwrap(), c.clone()],
        &id,
    )
    .unwrap();
    let right = concat(&[a, concat(&[b, c], &id).unwrap()], &id).unwrap();
    let (pl, pr) = (poincare_map(&left).unwrap(), poincare_map(&right).unwrap());
    assert!(max_abs(&(pl.matrix.matrix() - pr.matrix.matrix())) < 1e-9);
}

#[test]
fn iterates_of_round_sphere_and_nine_quarters() {
    for k in 1..=4 {
        let p = poincare_map(&iterate(&FormalGeodesic::round_sphere_block(2), k).unwrap()).unwrap();
        assert!(max_abs(&(p.matrix.matrix() - Mat::identity(4, 4))) < 1e-8);
    }
    let p2 = poincare_map(&iterate(&nine_quarters(2), 2).unwrap()).unwrap();
    assert!(max_abs(&(p2.matrix.matrix() - Mat::identity(4, 4))) < 1e-9);
}

#[test]
fn iteration_law_with_twist() {
    for seed in 0..4 {
        let fg = random_fg(100 + seed, 2);
        assert!(iteration_law_defect(&fg, 3).unwrap() <= 1e-8);
    }
}

#[test]
fn iterate_conjugates_each_lap() {
    let fg = random_fg(9, 2);
    let it = iterate(&fg, 3).unwrap();
    let a = fg.twist();
    let t = 1.0;
    let lap2 = it.profile().eval(2.0 * fg.length() + t);
    let expect = a * a * fg.profile().eval(t) * (a * a).transpose();
    assert!(max_abs(&(lap2 - expect)) < 1e-12);
    assert!(max_abs(&(it.twist() - a * a * a)) < 1e-12);
}

#[test]
fn conjugate_points_round_sphere() {
    let rep = conjugate_points(&FormalGeodesic::round_sphere_block(3)).unwrap();
    assert_eq!(rep.points.len(), 1);
    assert!((rep.points[0].t - PI).abs() < 1e-8);
    assert_eq!(rep.points[0].multiplicity, 3);
    assert_eq!(rep.ind_omega, 3);
}

#[test]
fn conjugate_points_nine_quarters() {
    let rep = conjugate_points(&nine_quarters(2)).unwrap();
    let ts: Vec<f64> = rep.points.iter().map(|p| p.t).collect();
    assert_eq!(ts.len(), 2);
    assert!((ts[0] - 2.0 * PI / 3.0).abs() < 1e-8 && (ts[1] - 4.0 * PI / 3.0).abs() < 1e-8);
    assert_eq!(rep.ind_omega, 4);
    let rep3 = conjugate_points(&iterate(&nine_quarters(2), 3).unwrap()).unwrap();
    assert_eq!(rep3.points.len(), 8);
    assert_eq!(rep3.ind_omega, 16);
}

#[test]
fn split_conjugate_points_have_single_multiplicity() {
    let r = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 2.25]));
    let fg = FormalGeodesic::constant(&r, &Mat::identity(2, 2), 2.0 * PI, "").unwrap();
    let rep = conjugate_points(&fg).unwrap();
    // zeros of sin t and sin(3t/2) on (0, 2π)
    let mut expect = vec![PI, 2.0 * PI / 3.0, 4.0 * PI / 3.0];
    expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(rep.points.len(), 3);
    for (p, e) in rep.points.iter().zip(&expect) {
        assert!((p.t - e).abs() < 1e-8);
        assert_eq!(p.multiplicity, 1);
    }
}

#[test]
fn round_sphere_index_report() {
    for m in 1..=3 {
        let r = index_report(&FormalGeodesic::round_sphere_block(m)).unwrap();
        let m = m as i64;
        assert_eq!(
            (r.ind_omega as i64, r.ind_p, r.ind, r.nullity as i64, r.ind0),
            (m, 0, m, 2 * m, 3 * m)
        );
    }
}

#[test]
fn round_sphere_iterate_indices() {
    let reps = iterate_reports(&FormalGeodesic::round_sphere_block(2), 4).unwrap();
    for (k, r) in reps.iter().enumerate() {
        assert_eq!(r.ind, (2 * (k as i64 + 1) - 1) * 2);
    }
}

#[test]
fn nine_quarters_indices() {
    let reps = iterate_reports(&nine_quarters(2), 3).unwrap();
    let got: Vec<(i64, usize)> = reps.iter().map(|r| (r.ind, r.nullity)).collect();
    assert_eq!(got, vec![(6, 0), (10, 4), (18, 0)]);
    for r in &reps {
        assert_eq!(r.ind, r.ind_omega as i64 + r.ind_p);
        assert_eq!(r.ind0, r.ind + r.nullity as i64);
    }
}

#[test]
fn concavity_form_of_minus_identity() {
    // D = (−2 Id)⁻¹(0⊕V) = 0⊕V and H̃(X,Y) = 2ω(X,Y) vanishes there
    let (cd, h) = concavity_form(&(-Mat::identity(4, 4))).unwrap();
    assert_eq!((cd.domain_dim, cd.index, cd.kernel), (2, 0, 2));
    assert!(max_abs(&h) < 1e-14);
}

#[test]
fn discretized_oracle_examples() {
    let cases: Vec<(FormalGeodesic, usize)> = vec![
        (FormalGeodesic::round_sphere_block(2), 2),
        (
            FormalGeodesic::constant(&Mat::zeros(2, 2), &Mat::identity(2, 2), 2.0 * PI, "flat")
                .unwrap(),
            0,
        ),
        (nine_quarters(2), 6),
    ];
    for (fg, expect) in cases {
        let hi = discretized_hessian_index(&fg, 16).unwrap();
        assert_eq!(hi.negative_count, expect, "{}", fg.label());
        let n = hi.form.history.len();
        assert!(n >= 3);
    }
}

#[test]
fn discretized_oracle_agrees_with_index_report() {
    let mut fgs = vec![
        exemplar_q(),
        iterate(&nine_quarters(2), 2).unwrap(),
        iterate(&nine_quarters(2), 3).unwrap(),
    ];
    for seed in 0..4 {
        fgs.push(random_fg(200 + seed, 2));
    }
    for fg in fgs {
        let r = index_report(&fg).unwrap();
        let hi = discretized_hessian_index(&fg, 16).unwrap();
        assert_eq!(hi.negative_count as i64, r.ind, "{}", fg.label());
        assert_eq!(hi.null_band, r.nullity, "{}", fg.label());
    }
}

#[test]
fn kernel_maps_onto_fixed_space() {
    for fg in [
        FormalGeodesic::round_sphere_block(2),
        iterate(&nine_quarters(2), 2).unwrap(),
        nine_quarters(2),
    ] {
        let rc = kernel_image_check(&fg, 256).unwrap();
        assert!(rc.holds, "{}: {rc:?}", fg.label());
        if rc.null_band > 0 {
            assert!(rc.fixed_residual < 1e-2);
        }
    }
}

#[test]
fn bott_identities_nine_quarters() {
    let b = bott_check(&nine_quarters(2), 2, 1).unwrap();
    assert_eq!((b.sum_rule.lhs, b.sum_rule.rhs), (18, 18));
    assert_eq!((b.difference_rule.lhs, b.difference_rule.rhs), (14, 14));
    assert!(b.sum_rule.holds && b.difference_rule.holds);
}

#[test]
fn bott_requires_regular_iterate() {
    let fg = random_fg(5, 2);
    assert!(matches!(
        bott_check(&fg, 2, 1),
        Err(Error::NotApplicable(_))
    ));
    assert!(matches!(bott_check(&fg, 2, 2), Err(Error::InvalidInput(_))));
}

// R = Q diag(ω²) Qᵀ with ω = p/q and A = Q diag(±1) Qᵀ, with the least
// period of P found from the eigenvalue phases
fn rational_rotation(seed: u64, m: usize) -> (FormalGeodesic, usize) {
    let mut r = rng(seed);
    let q = random_orthogonal(&mut r, m);
    let mut om = Vec::new();
    let mut signs = Vec::new();
    for _ in 0..m {
        let den = r.gen_range(1..=3usize);
        let num = r.gen_range(1..=3 * den);
        om.push(num as f64 / den as f64);
        signs.push(if r.gen_bool(0.5) { 1.0 } else { -1.0 });
    }
    let closes = |k: usize| {
        om.iter().zip(&signs).all(|(w, s): (&f64, &f64)| {
            let ph = 2.0 * PI * w * k as f64;
            (s.powi(k as i32) * ph.cos() - 1.0).abs() < 1e-12 && ph.sin().abs() < 1e-9
        })
    };
    let period = (1..=12).find(|&k| closes(k)).unwrap();
    let rm = &q
        * Mat::from_diagonal(&Vector::from_iterator(m, om.iter().map(|w| w * w)))
        * q.transpose();
    let am = &q * Mat::from_diagonal(&Vector::from_vec(signs)) * q.transpose();
    let fg = FormalGeodesic::constant(&crate::linalg::symmetrize(&rm), &am, 2.0 * PI, "rational")
        .unwrap();
    (fg, if period == 1 { 2 } else { period })
}

#[test]
fn bott_identities_random_rational_rotations() {
    let mut checked = 0;
    for seed in 0..12u64 {
        let (fg, q) = rational_rotation(1000 + seed, 2);
        if q > 6 {
            continue;
        }
        let l = 1 + (seed as usize) % (q - 1);
        let b = bott_check(&fg, q, l).unwrap();
        assert!(
            b.sum_rule.holds && b.difference_rule.holds,
            "seed {seed}: {b:?}"
        );
        // oracle on the longest iterate
        let hi = discretized_hessian_index(&iterate(&fg, q + l).unwrap(), 16).unwrap();
        assert_eq!(hi.negative_count as i64, b.sum_rule.lhs);
        checked += 1;
    }
    assert!(checked >= 6);
}

#[test]
fn gap_bounds_round_sphere() {
    let g = index_gap_bounds(&FormalGeodesic::round_sphere_block(2), 1, 2, 2).unwrap();
    assert_eq!((g.lhs, g.rhs), (6, 6));
    assert!(g.holds && !g.strict && g.equality_allowed && g.consistent);
}

#[test]
fn gap_bounds_nine_quarters() {
    let fg = nine_quarters(2);
    let up = index_gap_bounds(&fg, 2, 3, 2).unwrap();
    assert_eq!((up.lhs, up.rhs), (18, 14));
    assert!(up.holds && up.strict && up.consistent);
    let down = index_gap_bounds(&fg, 2, 1, 2).unwrap();
    assert_eq!((down.lhs, down.rhs), (6, 10));
    assert!(down.holds && down.strict);
}

#[test]
fn realization_chart_has_full_rank() {
    for m in 1..=4 {
        let fam = RealizationFamily::standard(m).unwrap();
        assert_eq!(fam.h(), m * (2 * m + 1));
        assert!(
            fam.conditioning > 1e-3,
            "m={m}: σ_min = {}",
            fam.conditioning
        );
        let p = poincare_map(&fam.base).unwrap();
        assert!(max_abs(&(p.matrix.matrix() - Mat::identity(2 * m, 2 * m))) < 1e-9);
    }
}

#[test]
fn realize_identity_is_fixed_point() {
    let fam = RealizationFamily::standard(2).unwrap();
    let out = realize_poincare(&SymplecticMatrix::identity(2), &fam).unwrap();
    assert_eq!(out.iterations, 0);
    assert!(out.coefficients.iter().all(|&c| c == 0.0));
    assert_eq!(&out.profile, fam.base.profile());
}

#[test]
fn realize_small_exponential() {
    let fam = RealizationFamily::standard(2).unwrap();
    let mut r = rng(77);
    let x = random_sp_algebra(&mut r, 2, 1.0);
    let target = SymplecticMatrix::new((x * 1e-2).exp()).unwrap();
    let out = realize_poincare(&target, &fam).unwrap();
    assert!(out.residual <= 1e-7);
    // re-integrate the returned profile
    let fg = FormalGeodesic::new(out.profile, Mat::identity(2, 2), "").unwrap();
    let p = poincare_map(&fg).unwrap();
    assert!(max_abs(&(p.matrix.matrix() - target.matrix())) <= 1e-7);
}

#[test]
fn realize_at_chart_boundary_never_lies() {
    let fam = RealizationFamily::standard(1).unwrap();
    let mut r = rng(5);
    for _ in 0..3 {
        let x = random_sp_algebra(&mut r, 1, 1.0);
        let x = &x * (0.2 / max_abs(&x));
        let target = SymplecticMatrix::new(x.exp()).unwrap();
        match realize_poincare(&target, &fam) {
            Ok(out) => {
                let fg = FormalGeodesic::new(out.profile, Mat::identity(1, 1), "").unwrap();
                let p = poincare_map(&fg).unwrap();
                assert!(max_abs(&(p.matrix.matrix() - target.matrix())) <= 1e-7);
            }
            Err(e) => assert!(matches!(
                e,
                Error::RealizationFailed { .. } | Error::Precondition(_)
            )),
        }
    }
    let far = SymplecticMatrix::new(-Mat::identity(2, 2)).unwrap();
    assert!(matches!(
        realize_poincare(&far, &fam),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn json_round_trip() {
    let fg = FormalGeodesic::new(
        CurvatureProfile::new(
            2,
            vec![
                Segment {
                    t0: 0.0,
                    t1: 1.0,
                    rule: Rule::Constant {
                        value: scalar(2, 1.0),
                    },
                },
                Segment {
                    t0: 1.0,
                    t1: 2.0,
                    rule: Rule::Polynomial {
                        origin: 1.0,
                        coeffs: vec![scalar(2, 1.0), scalar(2, 0.5)],
                    },
                },
            ],
        )
        .unwrap(),
        rot(0.3),
        "poly",
    )
    .unwrap();
    let s = serde_json::to_string(&fg).unwrap();
    assert!(s.contains("\"T\"") && s.contains("\"A\"") && s.contains("\"segments\""));
    let back: FormalGeodesic = serde_json::from_str(&s).unwrap();
    assert_eq!(back, fg);
    let rep = index_report(&exemplar_q()).unwrap();
    let back: IndexReport = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
    assert_eq!(back, rep);
}

#[test]
fn twist_must_be_orthogonal() {
    let mut a = Mat::identity(2, 2);
    a[(0, 1)] = 1e-6;
    assert!(FormalGeodesic::constant(&scalar(2, 1.0), &a, 1.0, "").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn flow_stays_symplectic(seed in 0u64..10_000, m in 1usize..4) {
        let path = fundamental_solution(&random_fg(seed, m)).unwrap();
        prop_assert!(path.max_defect <= 1e-9);
    }

    #[test]
    fn iteration_law_holds(seed in 0u64..10_000, q in 2usize..4) {
        prop_assert!(iteration_law_defect(&random_fg(seed, 2), q).unwrap() <= 1e-8);
    }

    #[test]
    fn index_decomposition_is_consistent(seed in 0u64..10_000) {
        let r = index_report(&random_fg(seed, 2)).unwrap();
        prop_assert_eq!(r.ind, r.ind_omega as i64 + r.ind_p);
        prop_assert_eq!(r.ind0, r.ind + r.nullity as i64);
        prop_assert!(r.ind >= 0);
    }

    #[test]
    fn conjugated_profile_gives_conjugated_map(seed in 0u64..10_000) {
        let fg = random_fg(seed, 2);
        let mut r = rng(seed + 1);
        let u = random_orthogonal(&mut r, 2);
        let moved = FormalGeodesic::new(fg.profile().conjugated(&u), &u * fg.twist() * u.transpose(), "").unwrap();
        let p = poincare_map(&fg).unwrap().matrix.into_matrix();
        let pu = poincare_map(&moved).unwrap().matrix.into_matrix();
        prop_assert!(max_abs(&(pu - delta(&u) * p * delta(&u).transpose())) < 1e-9);
    }
}
