//! Closed-form and one-dimensional reference values.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Adaptive Gauss–Legendre quadrature of a smooth function on [a, b].
///
/// Each interval is compared against its bisection with a 12-point rule and split
/// until the estimates agree to `tol` (absolute, distributed over subintervals).
pub fn adaptive_integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (xs, ws) = gauss_legendre(12);
    let rule = |lo: f64, hi: f64| -> f64 {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        xs.iter().zip(&ws).map(|(x, w)| half * w * f(mid + half * x)).sum()
    };
    let mut stack = vec![(a, b, rule(a, b), 0usize)];
    let mut total = 0.0;
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = rule(lo, mid);
        let right = rule(mid, hi);
        let scaled_tol = tol * (hi - lo) / (b - a);
        if (left + right - whole).abs() <= scaled_tol || depth >= 60 {
            if depth >= 60 {
                return Err(Error::InsufficientSignal(format!(
                    "adaptive quadrature did not converge on [{lo}, {hi}]"
                )));
            }
            total += left + right;
        } else {
            stack.push((mid, hi, right, depth + 1));
            stack.push((lo, mid, left, depth + 1));
        }
    }
    Ok(total)
}

/// TP^(p,2) of a unit-length round circle: π^{p−2} ∫_{−½}^{½} sin(π|w|)^{4−p} dw.
///
/// The endpoint singularity is removed with w = ½ v^{1/(α+1)}, α = 4 − p, after
/// factoring sin(πw)^α = (πw)^α · (sin(πw)/(πw))^α.
pub fn circle_energy(p: f64) -> Result<f64> {
    let alpha = 4.0 - p;
    if !(alpha > -1.0) {
        return Err(Error::parameter(format!("circle energy diverges for p = {p}")));
    }
    let exponent = 1.0 / (alpha + 1.0);
    let smooth = |v: f64| {
        let w = 0.5 * v.powf(exponent);
        if w == 0.0 {
            1.0
        } else {
            ((PI * w).sin() / (PI * w)).powf(alpha)
        }
    };
    let inner = adaptive_integrate(&smooth, 0.0, 1.0, 1e-14)?;
    let half = PI.powf(alpha) * 0.5_f64.powf(alpha + 1.0) / (alpha + 1.0) * inner;
    Ok(PI.powf(p - 2.0) * 2.0 * half)
}

/// Classical TP^q of a round circle of radius `radius` and length `length`: L²/R^q.
pub fn circle_classical_energy(radius: f64, length: f64, q: f64) -> f64 {
    length * length / radius.powf(q)
}
