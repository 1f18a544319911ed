#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tangent_point::{DiscreteCurve, DisplacementField, Field};

/// Band-limited field with seeded coefficients on modes 0..=max_mode.
pub fn random_field(n: usize, dim: usize, max_mode: usize, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<Vec<(f64, f64)>> = (0..dim)
        .map(|_| {
            (0..=max_mode)
                .map(|m| {
                    let decay = 1.0 / (1.0 + m as f64);
                    (decay * rng.random_range(-1.0..1.0), decay * rng.random_range(-1.0..1.0))
                })
                .collect()
        })
        .collect();
    Field::from_fn(n, dim, |x| {
        (0..dim)
            .map(|a| {
                coeffs[a]
                    .iter()
                    .enumerate()
                    .map(|(m, (c, s))| {
                        let t = 2.0 * PI * m as f64 * x;
                        c * t.cos() + s * t.sin()
                    })
                    .sum()
            })
            .collect()
    })
}

pub fn random_displacement(n: usize, dim: usize, max_mode: usize, seed: u64) -> DisplacementField {
    DisplacementField::new(random_field(n, dim, max_mode, seed)).unwrap()
}

/// Band-limited tangent field on [`DiscreteCurve::unit_circle`]: h = aN + bT with
/// b′ = −2πa, shifted so that h(0) = 0.
pub fn circle_tangent_field(n: usize, dim: usize, max_mode: usize, seed: u64) -> DisplacementField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64)> = (1..=max_mode)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    // Out-of-plane part: any c(x) e₃ with c(0) = 0 is tangent.
    let lift: Vec<(f64, f64)> = (1..=max_mode)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let eval = |x: f64| -> Vec<f64> {
        let th = 2.0 * PI * x;
        let (mut b, mut db, mut c) = (0.0, 0.0, 0.0);
        for (idx, (p, q)) in modes.iter().enumerate() {
            let m = (idx + 1) as f64;
            b += p * (m * th).cos() + q * (m * th).sin();
            db += 2.0 * PI * m * (-p * (m * th).sin() + q * (m * th).cos());
            c += lift[idx].0 * (m * th).cos() + lift[idx].1 * (m * th).sin();
        }
        let a = -db / (2.0 * PI);
        let normal = [th.cos(), th.sin()];
        let tangent = [-th.sin(), th.cos()];
        let mut v = vec![0.0; dim];
        v[0] = a * normal[0] + b * tangent[0];
        v[1] = a * normal[1] + b * tangent[1];
        if dim >= 3 {
            v[2] = c;
        }
        v
    };
    let origin = eval(0.0);
    let field = Field::from_fn(n, dim, |x| {
        eval(x).iter().zip(&origin).map(|(v, o)| v - o).collect()
    });
    DisplacementField::new(field).unwrap()
}

pub fn test_curve(n: usize, dim: usize, seed: u64) -> DiscreteCurve {
    DiscreteCurve::perturbed_circle(n, dim, (2, 4), 0.15, seed).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
