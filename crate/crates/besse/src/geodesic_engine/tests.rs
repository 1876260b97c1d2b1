use std::f64::consts::PI;

use super::*;
use crate::formal_geodesic::hessian::discretized_hessian_index;
use crate::formal_geodesic::{index_report, poincare_map};
use crate::linalg::max_abs;
use crate::random::rng;

fn great_circle(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    x[0] = 1.0;
    v[1] = 1.0;
    (x, v)
}

fn tilted(metric: &MetricSpec) -> (Vec<f64>, Vec<f64>) {
    let (x, v) = unit_initial(metric, &[0.6, 0.2, 0.3], &[-0.1, 0.5, 0.9]).unwrap();
    (x.iter().copied().collect(), v.iter().copied().collect())
}

#[test]
fn great_circles_close_at_two_pi() {
    for n in [2, 3] {
        let m = MetricSpec::round(n);
        let (x, v) = great_circle(n);
        let rec = trace_closed_geodesic(&m, &x, &v, 3.0 * PI).unwrap();
        assert!((rec.period - 2.0 * PI).abs() < 1e-8, "{}", rec.period);
        assert!(rec.closure_residual < TOL_CLOSE);
        assert!(rec.speed_drift < 1e-9);
        assert!((rec.energy - 4.0 * PI * PI).abs() < 1e-6);
        assert!((rec.half_energy - 2.0 * PI * PI).abs() < 1e-6);
    }
}

#[test]
fn random_sphere_geodesics_follow_the_closed_form() {
    let m = MetricSpec::round(4);
    let mut r = rng(3);
    let (x, v) = random_unit_initial(&m, &mut r).unwrap();
    let path = integrate_geodesic(&m, x.as_slice(), v.as_slice(), 5.0).unwrap();
    for p in path.samples.iter().step_by(17) {
        let want = &x * p.t.cos() + &v * p.t.sin();
        let got = Vector::from_column_slice(&p.x);
        assert!((want - got).norm() < 1e-9);
    }
}

#[test]
fn flat_zoll_profile_is_the_round_sphere() {
    let z = MetricSpec::Zoll { h: vec![0.0] };
    let round = MetricSpec::round(2);
    let (x, v) = tilted(&round);
    let a = integrate_geodesic(&z, &x, &v, 7.0).unwrap();
    let b = integrate_geodesic(&round, &x, &v, 7.0).unwrap();
    for (p, q) in a.samples.iter().zip(&b.samples) {
        for i in 0..3 {
            assert!((p.x[i] - q.x[i]).abs() < 1e-9);
            assert!((p.v[i] - q.v[i]).abs() < 1e-9);
        }
    }
}

#[test]
fn zoll_geodesics_close_at_two_pi() {
    let m = MetricSpec::zoll_example();
    let mut r = rng(11);
    for _ in 0..8 {
        let (x, v) = random_unit_initial(&m, &mut r).unwrap();
        let rec = trace_closed_geodesic(&m, x.as_slice(), v.as_slice(), 2.5 * PI).unwrap();
        assert!((rec.period - 2.0 * PI).abs() < 1e-6, "{}", rec.period);
        assert!(rec.speed_drift < 1e-9, "{}", rec.speed_drift);
        assert!(rec.clairaut_drift.unwrap() < 1e-9);
    }
}

#[test]
fn pole_crossing_meridian_closes() {
    let m = MetricSpec::zoll_example();
    let (x, v) = unit_initial(&m, &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
    let rec = trace_closed_geodesic(&m, x.as_slice(), v.as_slice(), 2.5 * PI).unwrap();
    assert!((rec.period - 2.0 * PI).abs() < 1e-6);
}

#[test]
fn spheroid_meridian_has_the_ellipse_perimeter() {
    let m = MetricSpec::control();
    let (x, v) = unit_initial(&m, &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
    let rec = trace_closed_geodesic(&m, x.as_slice(), v.as_slice(), 12.0).unwrap();
    // perimeter of the ellipse with semi-axes 1 and 2 by composite Simpson
    let n = 20000;
    let f = |t: f64| (t.cos().powi(2) + 4.0 * t.sin().powi(2)).sqrt();
    let h = 2.0 * PI / n as f64;
    let mut s = f(0.0) + f(2.0 * PI);
    for k in 1..n {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    let perimeter = s * h / 3.0;
    assert!((rec.period - perimeter).abs() < 1e-6, "{} vs {perimeter}", rec.period);
}

#[test]
fn spheroid_generic_geodesic_does_not_close() {
    let m = MetricSpec::control();
    let (x, v) = tilted(&m);
    let path = integrate_geodesic(&m, &x, &v, 20.0).unwrap();
    assert!(path.clairaut_drift.unwrap() < 1e-9);
    match detect_closure(&m, &path) {
        Err(Error::NotClosed { horizon }) => assert!((horizon - 20.0).abs() < 1e-9),
        other => panic!("expected NotClosed, got {other:?}"),
    }
}

#[test]
fn initial_data_is_checked() {
    let m = MetricSpec::round(2);
    assert!(matches!(
        integrate_geodesic(&m, &[2.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 1.0),
        Err(Error::InvalidInput(_))
    ));
    assert!(matches!(
        integrate_geodesic(&m, &[1.0, 0.0, 0.0], &[0.0, 2.0, 0.0], 1.0),
        Err(Error::Precondition(_))
    ));
    assert!(matches!(
        integrate_geodesic(&m, &[1.0, 0.0, 0.0], &[0.0, 1.0], 1.0),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn metric_validation() {
    assert!(MetricSpec::Zoll { h: vec![0.1, 0.0] }.validate().is_err());
    assert!(MetricSpec::Zoll { h: vec![0.0, 0.3] }.validate().is_err());
    assert!(MetricSpec::Zoll {
        h: vec![0.0, 3.0, 0.0, -3.0]
    }
    .validate()
    .is_err());
    assert!(MetricSpec::zoll_example().validate().is_ok());
    assert!(MetricSpec::round(1).validate().is_err());
    assert!(MetricSpec::Revolution {
        b: vec![2.0],
        name: String::new()
    }
    .validate()
    .is_err());
    assert!(MetricSpec::control().validate().is_ok());
    assert!(MetricSpec::zoll_example().is_besse());
    assert!(!MetricSpec::control().is_besse());
}

#[test]
fn metric_json_round_trip() {
    for m in [
        MetricSpec::round(5),
        MetricSpec::zoll_example(),
        MetricSpec::control(),
    ] {
        let s = serde_json::to_string(&m).unwrap();
        let back: MetricSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }
    let parsed: MetricSpec = serde_json::from_str(r#"{"family":"round_sphere","n":3}"#).unwrap();
    assert_eq!(parsed, MetricSpec::round(3));
}

#[test]
fn zoll_equator_curvature_is_one() {
    let m = MetricSpec::zoll_example();
    assert!((m.gauss_curvature(0.0).unwrap() - 1.0).abs() < 1e-15);
    assert!(MetricSpec::round(3).gauss_curvature(0.0).is_none());
}

#[test]
fn great_circle_holonomy_is_trivial() {
    for n in [2, 3, 4] {
        let m = MetricSpec::round(n);
        let (x, v) = great_circle(n);
        let rec = trace_closed_geodesic(&m, &x, &v, 3.0 * PI).unwrap();
        let tr = transport_frame(&m, &rec).unwrap();
        assert!(max_abs(&(&tr.holonomy - Mat::identity(n - 1, n - 1))) < 1e-8);
        assert!(tr.closure_defect < 1e-8);
    }
}

#[test]
fn zoll_equator_data_is_constant() {
    let m = MetricSpec::zoll_example();
    let rec = trace_closed_geodesic(&m, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 2.5 * PI).unwrap();
    let ex = extract_formal(&m, &rec, 1, 256).unwrap();
    let p = ex.formal.profile();
    for k in 0..50 {
        let t = k as f64 * rec.period / 50.0;
        assert!((p.eval(t)[(0, 0)] - 1.0).abs() < 1e-12);
    }
    let tr = transport_frame(&m, &rec).unwrap();
    assert!((tr.holonomy[(0, 0)].abs() - 1.0).abs() < 1e-9);
}

#[test]
fn sphere_extraction_recovers_round_indices() {
    for n in [2, 3] {
        let m = MetricSpec::round(n);
        let mut r = rng(n as u64);
        let (x, v) = random_unit_initial(&m, &mut r).unwrap();
        let rec = trace_closed_geodesic(&m, x.as_slice(), v.as_slice(), 3.0 * PI).unwrap();
        for k in 1..=3usize {
            let ex = extract_formal(&m, &rec, k, 512).unwrap();
            let rep = index_report(&ex.formal).unwrap();
            let want = ((2 * k - 1) * (n - 1)) as i64;
            assert_eq!(rep.ind, want, "n={n} k={k}");
            assert_eq!(rep.nullity, 2 * (n - 1));
            assert!(parity_consistent(n, rep.ind));
            let oracle = discretized_hessian_index(&ex.formal, 32).unwrap();
            assert_eq!(oracle.negative_count as i64, want);
        }
    }
}

#[test]
fn frame_choice_does_not_change_the_index() {
    let m = MetricSpec::round(3);
    let (x, v) = great_circle(3);
    let rec = trace_closed_geodesic(&m, &x, &v, 3.0 * PI).unwrap();
    let (c, s) = (0.3f64.cos(), 0.3f64.sin());
    let frame = vec![vec![0.0, 0.0, c, s], vec![0.0, 0.0, -s, c]];
    let a = extract_formal(&m, &rec, 2, 256).unwrap();
    let b = extract_formal_with_frame(&m, &rec, 2, 256, Some(&frame)).unwrap();
    let ra = index_report(&a.formal).unwrap();
    let rb = index_report(&b.formal).unwrap();
    assert_eq!(ra.ind, rb.ind);
    assert_eq!(ra.nullity, rb.nullity);
    let pa = poincare_map(&a.formal).unwrap().matrix.into_matrix();
    let pb = poincare_map(&b.formal).unwrap().matrix.into_matrix();
    assert!((pa.trace() - pb.trace()).abs() < 1e-8);
}

#[test]
fn bad_frame_is_rejected() {
    let m = MetricSpec::round(3);
    let (x, v) = great_circle(3);
    let rec = trace_closed_geodesic(&m, &x, &v, 3.0 * PI).unwrap();
    let frame = vec![vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]];
    assert!(extract_formal_with_frame(&m, &rec, 1, 64, Some(&frame)).is_err());
}

#[test]
fn zoll_iterates_have_odd_indices() {
    let m = MetricSpec::zoll_example();
    let (x, v) = tilted(&m);
    let rec = trace_closed_geodesic(&m, &x, &v, 2.5 * PI).unwrap();
    for k in 1..=2usize {
        let ex = extract_formal(&m, &rec, k, 1024).unwrap();
        let p = poincare_map(&ex.formal).unwrap().matrix.into_matrix();
        assert!(max_abs(&(p - Mat::identity(2, 2))) < 1e-6);
        let rep = index_report(&ex.formal).unwrap();
        assert_eq!(rep.ind, (2 * k - 1) as i64);
        let oracle = discretized_hessian_index(&ex.formal, 32).unwrap();
        assert_eq!(oracle.negative_count, 2 * k - 1);
    }
}

#[test]
fn critical_manifold_dimensions() {
    for (m, want) in [
        (MetricSpec::round(2), 3),
        (MetricSpec::round(3), 5),
        (MetricSpec::zoll_example(), 3),
    ] {
        let mut r = rng(5);
        let (x, v) = random_unit_initial(&m, &mut r).unwrap();
        let rec =
            trace_closed_geodesic(&m, x.as_slice(), v.as_slice(), 2.5 * PI).unwrap();
        let pr = probe_critical_manifold(&m, &rec).unwrap();
        assert_eq!(pr.dimension, want, "{:?}", pr.singular_values);
        assert!(!pr.degraded);
    }
}

#[test]
fn spheroid_meridians_form_a_smaller_family() {
    let m = MetricSpec::control();
    let (x, v) = unit_initial(&m, &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
    let rec = trace_closed_geodesic(&m, x.as_slice(), v.as_slice(), 12.0).unwrap();
    let pr = probe_critical_manifold(&m, &rec).unwrap();
    assert!(pr.dimension < 3, "{:?}", pr.singular_values);
}

#[test]
fn parity_rule() {
    assert!(parity_consistent(2, 1));
    assert!(parity_consistent(3, 6));
    assert!(!parity_consistent(3, 3));
}
