mod common;

use std::f64::consts::PI;

use common::test_curve;
use statrs::function::gamma::gamma;
use tangent_point::energy::classical_energy;
use tangent_point::{reference, DiscreteCurve, Error, QuadratureGrid, QuadratureOptions, SobolevOrder, TangentPointEnergy};

fn energy(s: f64, n: usize) -> TangentPointEnergy {
    TangentPointEnergy::new(SobolevOrder::new(s).unwrap(), n).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// 2π^{p−2}∫_0^{1/2} sin(πw)^{4−p} dw through the Beta function.
fn beta_oracle(p: f64) -> f64 {
    let a = 4.0 - p;
    2.0 * PI.powf(p - 3.0) * PI.sqrt() * gamma((a + 1.0) / 2.0) / (2.0 * gamma(a / 2.0 + 1.0))
}

#[test]
fn circle_energy_matches_the_beta_integral() {
    for s in [1.6, 1.75, 1.9] {
        let p = 2.0 * s + 1.0;
        let exact = beta_oracle(p);
        assert!(rel(reference::circle_energy(p).unwrap(), exact) < 1e-12);
        let value = energy(s, 256).energy(&DiscreteCurve::unit_circle(256, 2).unwrap()).unwrap();
        assert!(rel(value, exact) < 1e-6, "s = {s}: {value} vs {exact}");
    }
}

#[test]
fn homogeneity_and_euclidean_invariance() {
    let e = energy(1.7, 64);
    let curve = test_curve(64, 3, 4);
    let e0 = e.energy(&curve).unwrap();
    for lambda in [0.5, 2.0, 3.0] {
        let scaled = e.energy(&curve.scaled(lambda).unwrap()).unwrap();
        assert!(rel(scaled, lambda.powf(4.0 - e.p()) * e0) < 1e-10);
    }
    let (c, s) = (0.7_f64.cos(), 0.7_f64.sin());
    let moved = curve
        .map_points(|q| vec![c * q[0] - s * q[2] + 0.3, q[1] - 1.2, s * q[0] + c * q[2] + 2.0])
        .unwrap();
    assert!(rel(e.energy(&moved).unwrap(), e0) < 1e-12);
}

#[test]
fn factorized_energy_reproduces_the_energy() {
    for seed in 0..3 {
        let e = energy(1.65 + 0.1 * seed as f64, 32);
        let curve = test_curve(32, 3, seed);
        let direct = e.energy(&curve).unwrap();
        assert!(rel(e.factorized_energy(&curve).unwrap(), direct) < 1e-10);
    }
}

#[test]
fn integrand_factor_examples() {
    let n = 64;
    let e = energy(1.75, n);
    let circle = DiscreteCurve::unit_circle(n, 2).unwrap();
    let w = 0.5 - 1.0 / n as f64;
    let f = e.integrand_factors(&circle, 5, w).unwrap();
    assert!((f.psi - 1.0).abs() < 1e-12);
    let expected = (w * PI / (PI * w).sin()).powf(e.p() / 2.0);
    assert!(rel(f.lambda, expected) < 1e-12);
    assert!(e.integrand_factors(&circle, 0, 0.0).is_err());
}

#[test]
fn classical_energy_of_circles_and_ellipses() {
    let flat = |n| QuadratureGrid::new(n, 0.0, QuadratureOptions::default()).unwrap();
    let radius = 0.7;
    let circle = DiscreteCurve::circle(128, 2, radius).unwrap();
    let length = 2.0 * PI * radius;
    for q in [2.0, 3.0] {
        let value = classical_energy(&circle, q, &flat(128)).unwrap();
        assert!(rel(value, reference::circle_classical_energy(radius, length, q)) < 1e-8);
    }
    let unit = DiscreteCurve::unit_circle(128, 2).unwrap();
    assert!(rel(classical_energy(&unit, 2.0, &flat(128)).unwrap(), 4.0 * PI * PI) < 1e-8);

    let ellipse = |n| DiscreteCurve::ellipse(n, 2, 1.0, 0.5).unwrap();
    let fine = classical_energy(&ellipse(2048), 3.0, &flat(2048)).unwrap();
    let coarse = classical_energy(&ellipse(256), 3.0, &flat(256)).unwrap();
    assert!(rel(coarse, fine) < 1e-8, "{coarse} vs {fine}");
    assert!(classical_energy(&unit, 1.5, &flat(128)).is_err());
}

#[test]
fn self_intersection_is_reported_with_the_offending_pair() {
    let n = 64;
    let figure_eight = DiscreteCurve::from_fn(n, 2, |x| {
        vec![(2.0 * PI * x).sin(), 0.5 * (4.0 * PI * x).sin()]
    })
    .unwrap();
    match figure_eight.check_injective() {
        Err(Error::SelfIntersection { i, j, distance }) => {
            assert_eq!((i, j), (0, n / 2));
            assert!(distance < 1e-12);
        }
        other => panic!("expected a self-intersection, got {other:?}"),
    }
    assert!(figure_eight.distortion().unwrap_err().is_self_intersection());
}

#[test]
fn reparametrization_error_decreases_under_refinement() {
    let warped = |n: usize| {
        DiscreteCurve::from_fn(n, 2, |x| {
            let t = 2.0 * PI * (x + 0.08 * (2.0 * PI * x).sin());
            vec![t.cos(), 0.6 * t.sin()]
        })
        .unwrap()
    };
    let mut gaps = Vec::new();
    for n in [32, 64, 128] {
        let e = energy(1.75, n);
        let curve = warped(n);
        let retracted = curve.retract_to_arclength().unwrap().scaled(curve.length()).unwrap();
        gaps.push(rel(e.energy(&retracted).unwrap(), e.energy(&curve).unwrap()));
    }
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
    assert!(gaps[2] < 1e-6, "{gaps:?}");
}

#[test]
fn circle_has_the_smallest_energy_among_simple_shapes() {
    let n = 128;
    let e = energy(1.75, n);
    let unit = |c: DiscreteCurve| e.energy(&c.retract_to_arclength().unwrap()).unwrap();
    let circle = unit(DiscreteCurve::unit_circle(n, 2).unwrap());
    let ellipse = unit(DiscreteCurve::ellipse(n, 2, 1.5, 1.0).unwrap());
    let wobbly = unit(DiscreteCurve::perturbed_circle(n, 3, (2, 6), 0.1, 9).unwrap());
    assert!(circle < ellipse && circle < wobbly, "{circle} {ellipse} {wobbly}");
}
