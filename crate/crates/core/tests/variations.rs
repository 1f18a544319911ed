mod common;

use common::*;
use tangent_point::energy::TangentPointEnergy;
use tangent_point::variation::{self, Db2Evaluation, FormKind};
use tangent_point::{DiscreteCurve, DisplacementField, SobolevOrder};

fn energy(s: f64, n: usize) -> TangentPointEnergy {
    TangentPointEnergy::new(SobolevOrder::new(s).unwrap(), n).unwrap()
}

fn shifted(curve: &DiscreteCurve, eps: f64, k: &DisplacementField) -> DiscreteCurve {
    curve.displaced(eps, k.values()).unwrap()
}

#[test]
fn differential_matches_central_differences() {
    let n = 48;
    let e = energy(1.7, n);
    let curve = test_curve(n, 3, 5);
    let h = random_displacement(n, 3, 6, 11);
    let eps = 1e-5;
    let fd = (e.energy(&shifted(&curve, eps, &h)).unwrap() - e.energy(&shifted(&curve, -eps, &h)).unwrap())
        / (2.0 * eps);
    let direct = variation::d_tp(&e, &curve, &h).unwrap();
    let cov = e.differential(&curve).unwrap().apply(&h);
    assert!(rel_diff(direct, cov) < 1e-11, "{direct} vs {cov}");
    assert!(rel_diff(direct, fd) < 1e-7, "{direct} vs {fd}");
}

#[test]
fn second_variation_matches_differences_of_the_first() {
    let n = 32;
    let e = energy(1.6, n);
    let curve = test_curve(n, 2, 3);
    let h = random_displacement(n, 2, 5, 1);
    let k = random_displacement(n, 2, 5, 2);
    let eps = 1e-5;
    let fd = (variation::d_tp(&e, &shifted(&curve, eps, &k), &h).unwrap()
        - variation::d_tp(&e, &shifted(&curve, -eps, &k), &h).unwrap())
        / (2.0 * eps);
    let hk = variation::d2_tp(&e, &curve, &h, &k).unwrap();
    let kh = variation::d2_tp(&e, &curve, &k, &h).unwrap();
    assert!(rel_diff(hk, fd) < 1e-6, "{hk} vs {fd}");
    assert!(rel_diff(hk, kh) < 1e-10, "{hk} vs {kh}");
}

#[test]
fn db1_is_the_metric_derivative_with_frozen_arguments() {
    let n = 32;
    let e = energy(1.8, n);
    let curve = test_curve(n, 3, 9);
    let gamma = curve.as_displacement();
    let h = random_displacement(n, 3, 5, 4);
    let k = random_displacement(n, 3, 5, 6);
    let eps = 1e-5;
    let fd = (variation::b1(&e, &shifted(&curve, eps, &k), &gamma, &h).unwrap()
        - variation::b1(&e, &shifted(&curve, -eps, &k), &gamma, &h).unwrap())
        / (2.0 * eps);
    let direct = variation::db1(&e, &curve, &k, &h).unwrap();
    assert!(rel_diff(direct, fd) < 1e-6, "{direct} vs {fd}");
}

#[test]
fn db2_and_db3_are_frozen_argument_derivatives() {
    let n = 32;
    let e = energy(1.65, n);
    let curve = test_curve(n, 2, 17);
    let gamma = curve.as_displacement();
    let h = random_displacement(n, 2, 5, 8);
    let k = random_displacement(n, 2, 5, 9);
    let eps = 1e-5;
    let fd = |f: fn(&TangentPointEnergy, &DiscreteCurve, &DisplacementField, &DisplacementField) -> tangent_point::Result<f64>| {
        (f(&e, &shifted(&curve, eps, &k), &gamma, &h).unwrap() - f(&e, &shifted(&curve, -eps, &k), &gamma, &h).unwrap())
            / (2.0 * eps)
    };
    let db2 = variation::db2_full(&e, &curve, &k, &h).unwrap();
    let fd2 = fd(variation::b2);
    assert!(rel_diff(db2, fd2) < 1e-6, "{db2} vs {fd2}");
    let db3 = variation::db3(&e, &curve, &k, &h).unwrap();
    let fd3 = fd(variation::b3);
    assert!(rel_diff(db3, fd3) < 1e-6, "{db3} vs {fd3}");
}

#[test]
fn assembled_matrices_agree_with_pairwise_evaluators() {
    let n = 24;
    let e = energy(1.7, n);
    let curve = test_curve(n, 2, 21);
    let h = random_displacement(n, 2, 4, 31);
    let k = random_displacement(n, 2, 4, 32);
    let checks: Vec<(FormKind, f64)> = vec![
        (FormKind::B1, variation::b1(&e, &curve, &h, &k).unwrap()),
        (FormKind::B2, variation::b2(&e, &curve, &h, &k).unwrap()),
        (FormKind::B3, variation::b3(&e, &curve, &h, &k).unwrap()),
        (FormKind::DB1, variation::db1(&e, &curve, &k, &h).unwrap()),
        (FormKind::DB3, variation::db3(&e, &curve, &k, &h).unwrap()),
        (FormKind::G, variation::metric_g(&e, &curve, &h, &k).unwrap()),
        (FormKind::D2TP, variation::d2_tp(&e, &curve, &h, &k).unwrap()),
        (FormKind::D2L, variation::d2_length(&curve, &h, &k).unwrap()),
    ];
    for (kind, expected) in checks {
        let m = variation::form_matrix(&e, &curve, kind).unwrap();
        let got = m.evaluate(h.values(), k.values()).unwrap();
        assert!(rel_diff(got, expected) < 1e-10, "{kind:?}: {got} vs {expected}");
        if kind.is_symmetric() {
            assert!(m.asymmetry() < 1e-12, "{kind:?} asymmetry {}", m.asymmetry());
        }
    }
}

#[test]
fn db2_split_and_direct_agree_for_tangent_directions() {
    let n = 64;
    let e = energy(1.75, n);
    let curve = DiscreteCurve::unit_circle(n, 3).unwrap();
    let k = circle_tangent_field(n, 3, 4, 3);
    let h = random_displacement(n, 3, 4, 4);
    let direct = variation::db2(&e, &curve, &k, &h, Db2Evaluation::Direct).unwrap();
    let split = variation::db2(&e, &curve, &k, &h, Db2Evaluation::Split).unwrap();
    let full = variation::db2_full(&e, &curve, &k, &h).unwrap();
    assert!(rel_diff(direct, split) < 1e-12);
    assert!((direct - full).abs() < 1e-9 * direct.abs().max(1.0));
    let m = variation::form_matrix(&e, &curve, FormKind::DB2).unwrap();
    let via_matrix = m.evaluate(h.values(), k.values()).unwrap();
    assert!(rel_diff(direct, via_matrix) < 1e-10);
}

#[test]
fn db2_rejects_non_tangent_directions() {
    let n = 32;
    let e = energy(1.75, n);
    let curve = DiscreteCurve::unit_circle(n, 2).unwrap();
    let k = random_displacement(n, 2, 3, 1);
    assert!(variation::db2(&e, &curve, &k, &k, Db2Evaluation::Direct).is_err());
}

#[test]
fn db3_vanishes_on_tangent_fields_of_an_arclength_circle() {
    let n = 64;
    let e = energy(1.6, n);
    let curve = DiscreteCurve::unit_circle(n, 3).unwrap();
    let gamma = curve.as_displacement();
    let scale = variation::b3(&e, &curve, &gamma, &gamma).unwrap().abs();
    for seed in 0..4 {
        let h = circle_tangent_field(n, 3, 5, seed);
        let k = circle_tangent_field(n, 3, 5, seed + 100);
        let v = variation::db3_vanishes(&e, &curve, &k, &h).unwrap();
        assert!(v.abs() < 1e-10 * scale.max(1.0), "seed {seed}: {v}");
    }
    let curve = DiscreteCurve::ellipse(n, 2, 0.2, 0.1).unwrap();
    let h = random_displacement(n, 2, 3, 1);
    assert!(variation::db3_vanishes(&e, &curve, &h, &h).is_err());
}

#[test]
fn length_variations_match_differences() {
    let n = 32;
    let curve = test_curve(n, 3, 2);
    let h = random_displacement(n, 3, 5, 1);
    let k = random_displacement(n, 3, 5, 2);
    let eps = 1e-5;
    let dl = variation::d_length(&curve, &h).unwrap();
    let fd = (variation::length(&shifted(&curve, eps, &h)) - variation::length(&shifted(&curve, -eps, &h))) / (2.0 * eps);
    assert!(rel_diff(dl, fd) < 1e-8);
    assert!(rel_diff(dl, variation::d_length_covector(&curve).apply(&h)) < 1e-12);
    let d2 = variation::d2_length(&curve, &h, &k).unwrap();
    let fd2 = (variation::d_length(&shifted(&curve, eps, &k), &h).unwrap()
        - variation::d_length(&shifted(&curve, -eps, &k), &h).unwrap())
        / (2.0 * eps);
    assert!(rel_diff(d2, fd2) < 1e-6, "{d2} vs {fd2}");
}

#[test]
fn lagrange_multiplier_on_the_circle_follows_scaling() {
    let n = 128;
    let order = SobolevOrder::new(1.7).unwrap();
    let e = TangentPointEnergy::new(order, n).unwrap();
    let space = tangent_point::SobolevSpace::new(n, order).unwrap();
    let curve = DiscreteCurve::unit_circle(n, 2).unwrap();
    let tp = e.energy(&curve).unwrap();
    let lm = variation::lagrange_multiplier(&e, &curve, &space).unwrap();
    assert!(rel_diff(lm.lambda, (order.p() - 4.0) * tp) < 1e-10, "{} vs {}", lm.lambda, (order.p() - 4.0) * tp);
    assert!(lm.residual < 1e-9 * lm.differential_norm);
}

#[test]
fn form_matrix_export_writes_csv_and_metadata() {
    let n = 16;
    let e = energy(1.7, n);
    let curve = test_curve(n, 2, 1);
    let m = variation::form_matrix(&e, &curve, FormKind::B1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b1.csv");
    let json = dir.path().join("b1.json");
    m.export(&csv, &json).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 2 * n);
    let info: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(info["kind"], "B1");
    assert_eq!(info["rows"], 2 * n);
    assert_eq!(info["curve_hash"], curve.content_hash());
}
