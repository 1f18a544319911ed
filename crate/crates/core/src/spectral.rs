//! Fourier machinery on the uniform periodic grid x_i = i/N.
//!
//! Every operator used by the engine (differentiation, fractional shifts, the
//! derivative evaluated at shifted points) is diagonal in Fourier space. The
//! Nyquist mode of an even grid is interpreted as `cos(πN x)`, which keeps all
//! operators real.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Smallest admissible grid.
pub const MIN_NODES: usize = 8;

/// A Fourier multiplier acting on periodic samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Multiplier {
    Identity,
    /// ∂_x.
    Derivative,
    /// f ↦ f(· + w), w in parameter units.
    Shift(f64),
    /// f ↦ f′(· + w).
    ShiftedDerivative(f64),
    /// f ↦ f(· + w) − f − w f′, evaluated without cancellation for small w.
    Remainder(f64),
}

/// sin θ − θ, using the Taylor series where direct subtraction cancels.
fn sin_minus_identity(theta: f64) -> f64 {
    if theta.abs() > 0.5 {
        return theta.sin() - theta;
    }
    let t2 = theta * theta;
    let mut term = -theta * t2 / 6.0;
    let mut acc = term;
    let mut k = 3.0;
    while term.abs() > 1e-18 * acc.abs() {
        term *= -t2 / ((k + 1.0) * (k + 2.0));
        acc += term;
        k += 2.0;
    }
    acc
}

pub struct SpectralGrid {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("n", &self.n).finish()
    }
}

fn cache() -> &'static Mutex<HashMap<usize, Arc<SpectralGrid>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<SpectralGrid>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl SpectralGrid {
    /// Returns the (cached) grid of size `n`; `n` must be even and at least 8.
    pub fn new(n: usize) -> Result<Arc<Self>> {
        if n < MIN_NODES {
            return Err(Error::config(format!(
                "grid of {n} nodes is too small, need at least {MIN_NODES}"
            )));
        }
        if n % 2 != 0 {
            return Err(Error::config(format!("grid size must be even, got {n}")));
        }
        let mut map = cache().lock().expect("spectral cache poisoned");
        Ok(map
            .entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(SpectralGrid {
                    n,
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                })
            })
            .clone())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn nyquist(&self) -> usize {
        self.n / 2
    }

    /// Signed frequency of FFT bin `k`.
    #[inline]
    pub fn frequency(&self, k: usize) -> f64 {
        if k <= self.n / 2 {
            k as f64
        } else {
            k as f64 - self.n as f64
        }
    }

    pub fn multiplier(&self, op: Multiplier, k: usize) -> Complex64 {
        let n = self.n as f64;
        let nyquist = k == self.n / 2;
        let freq = self.frequency(k);
        match op {
            Multiplier::Identity => Complex64::new(1.0, 0.0),
            Multiplier::Derivative => {
                if nyquist {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, 2.0 * PI * freq)
                }
            }
            Multiplier::Shift(w) => {
                if nyquist {
                    Complex64::new((PI * n * w).cos(), 0.0)
                } else {
                    Complex64::from_polar(1.0, 2.0 * PI * freq * w)
                }
            }
            Multiplier::ShiftedDerivative(w) => {
                if nyquist {
                    Complex64::new(-PI * n * (PI * n * w).sin(), 0.0)
                } else {
                    Complex64::new(0.0, 2.0 * PI * freq) * Complex64::from_polar(1.0, 2.0 * PI * freq * w)
                }
            }
            Multiplier::Remainder(w) => {
                if nyquist {
                    let half = 0.5 * PI * n * w;
                    Complex64::new(-2.0 * half.sin().powi(2), 0.0)
                } else {
                    let theta = 2.0 * PI * freq * w;
                    let half = 0.5 * theta;
                    Complex64::new(-2.0 * half.sin().powi(2), sin_minus_identity(theta))
                }
            }
        }
    }

    /// Normalized Fourier coefficients c_k = (1/N) Σ_i f_i e^{-2πi k i/N}.
    pub fn coefficients(&self, values: &[f64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.n);
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        buf
    }

    /// Inverse of [`coefficients`](Self::coefficients), keeping the real part.
    pub fn synthesize(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.synthesize_into(coeffs.to_vec(), &mut out);
        out
    }

    fn synthesize_into(&self, mut buf: Vec<Complex64>, out: &mut [f64]) {
        self.inverse.process(&mut buf);
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re;
        }
    }

    pub fn apply(&self, values: &[f64], op: Multiplier) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_into(values, op, &mut out);
        out
    }

    pub fn apply_into(&self, values: &[f64], op: Multiplier, out: &mut [f64]) {
        if op == Multiplier::Identity {
            out.copy_from_slice(values);
            return;
        }
        let mut coeffs = self.coefficients(values);
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c *= self.multiplier(op, k);
        }
        self.synthesize_into(coeffs, out);
    }

    /// Applies the transpose of `op` (the conjugate multiplier, since the operators are real).
    pub fn apply_transpose_into(&self, values: &[f64], op: Multiplier, out: &mut [f64]) {
        if op == Multiplier::Identity {
            out.copy_from_slice(values);
            return;
        }
        let mut coeffs = self.coefficients(values);
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c *= self.multiplier(op, k).conj();
        }
        self.synthesize_into(coeffs, out);
    }

    /// Applies two operators to the same input with a single forward transform.
    pub fn apply_two(&self, values: &[f64], first: Multiplier, second: Multiplier) -> (Vec<f64>, Vec<f64>) {
        let coeffs = self.coefficients(values);
        // Both results are real, so they can share one inverse transform as re/im parts.
        let packed: Vec<Complex64> = coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let a = c * self.multiplier(first, k);
                let b = c * self.multiplier(second, k);
                a + Complex64::new(0.0, 1.0) * b
            })
            .collect();
        let mut buf = packed;
        self.inverse.process(&mut buf);
        (buf.iter().map(|c| c.re).collect(), buf.iter().map(|c| c.im).collect())
    }

    /// Evaluates the trigonometric interpolant with coefficients `coeffs` at `x`.
    pub fn evaluate(&self, coeffs: &[Complex64], x: f64) -> f64 {
        self.evaluate_with(coeffs, x, false)
    }

    /// Evaluates the derivative of the trigonometric interpolant at `x`.
    pub fn evaluate_derivative(&self, coeffs: &[Complex64], x: f64) -> f64 {
        self.evaluate_with(coeffs, x, true)
    }

    fn evaluate_with(&self, coeffs: &[Complex64], x: f64, derivative: bool) -> f64 {
        let n = self.n;
        let half = n / 2;
        let base = Complex64::from_polar(1.0, 2.0 * PI * x);
        let mut phase = base;
        let mut acc = if derivative { 0.0 } else { coeffs[0].re };
        for k in 1..half {
            // c_k e^{ikθ} + c_{-k} e^{-ikθ} = 2 Re(c_k e^{ikθ}) for real data.
            let term = coeffs[k] * phase;
            if derivative {
                acc += 2.0 * (Complex64::new(0.0, 2.0 * PI * k as f64) * term).re;
            } else {
                acc += 2.0 * term.re;
            }
            phase *= base;
        }
        let nyq = coeffs[half].re;
        let arg = PI * n as f64 * x;
        if derivative {
            acc += -nyq * PI * n as f64 * arg.sin();
        } else {
            acc += nyq * arg.cos();
        }
        acc
    }

    /// Applies `op` (or its transpose) to every column of `m`.
    pub fn apply_columns(&self, m: &DMatrix<f64>, op: Multiplier, transpose: bool) -> DMatrix<f64> {
        assert_eq!(m.nrows(), self.n);
        let mut out = DMatrix::zeros(self.n, m.ncols());
        let mut buf = vec![0.0; self.n];
        for c in 0..m.ncols() {
            let col = m.column(c);
            let input = col.as_slice();
            if transpose {
                self.apply_transpose_into(input, op, &mut buf);
            } else {
                self.apply_into(input, op, &mut buf);
            }
            out.column_mut(c).copy_from_slice(&buf);
        }
        out
    }

    /// `m · op` computed row by row with transforms.
    pub fn right_multiply(&self, m: &DMatrix<f64>, op: Multiplier) -> DMatrix<f64> {
        self.apply_columns(&m.transpose(), op, true).transpose()
    }

    /// Dense N×N matrix of an operator (column l is the image of the l-th unit vector).
    pub fn dense(&self, op: Multiplier) -> DMatrix<f64> {
        let n = self.n;
        // The operators are circulant: one transform gives the first column.
        let mut e0 = vec![0.0; n];
        e0[0] = 1.0;
        let col = self.apply(&e0, op);
        DMatrix::from_fn(n, n, |i, l| col[(i + n - l) % n])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rejects_small_or_odd_grids() {
        assert!(SpectralGrid::new(6).is_err());
        assert!(SpectralGrid::new(9).is_err());
        assert!(SpectralGrid::new(8).is_ok());
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let grid = SpectralGrid::new(16).unwrap();
        let d = grid.apply(&[3.5; 16], Multiplier::Derivative);
        assert!(d.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn derivative_exact_on_band_limited_input() {
        let grid = SpectralGrid::new(64).unwrap();
        let xs: Vec<f64> = (0..64).map(|i| i as f64 / 64.0).collect();
        let c: Vec<f64> = xs.iter().map(|x| (2.0 * PI * x).cos()).collect();
        let s: Vec<f64> = xs.iter().map(|x| (2.0 * PI * x).sin()).collect();
        let dc = grid.apply(&c, Multiplier::Derivative);
        let ds = grid.apply(&s, Multiplier::Derivative);
        for (i, x) in xs.iter().enumerate() {
            assert_abs_diff_eq!(dc[i], -2.0 * PI * (2.0 * PI * x).sin(), epsilon = 1e-10);
            assert_abs_diff_eq!(ds[i], 2.0 * PI * (2.0 * PI * x).cos(), epsilon = 1e-10);
        }

        let grid = SpectralGrid::new(16).unwrap();
        let f: Vec<f64> = (0..16).map(|i| (4.0 * PI * i as f64 / 16.0).cos()).collect();
        let df = grid.apply(&f, Multiplier::Derivative);
        for (i, v) in df.iter().enumerate() {
            let x = i as f64 / 16.0;
            assert_abs_diff_eq!(*v, -4.0 * PI * (4.0 * PI * x).sin(), epsilon = 1e-11);
        }
    }

    #[test]
    fn shift_matches_interpolant_and_transpose_is_adjoint() {
        let grid = SpectralGrid::new(16).unwrap();
        let f: Vec<f64> = (0..16).map(|i| ((i * 7 + 3) % 11) as f64 * 0.3 - 1.0).collect();
        let coeffs = grid.coefficients(&f);
        let w = 0.2371;
        let shifted = grid.apply(&f, Multiplier::Shift(w));
        let dshifted = grid.apply(&f, Multiplier::ShiftedDerivative(w));
        for i in 0..16 {
            let x = i as f64 / 16.0 + w;
            assert_abs_diff_eq!(shifted[i], grid.evaluate(&coeffs, x), epsilon = 1e-12);
            assert_abs_diff_eq!(dshifted[i], grid.evaluate_derivative(&coeffs, x), epsilon = 1e-10);
        }
        let m = grid.dense(Multiplier::ShiftedDerivative(w));
        let g: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut tg = vec![0.0; 16];
        grid.apply_transpose_into(&g, Multiplier::ShiftedDerivative(w), &mut tg);
        for l in 0..16 {
            let expected: f64 = (0..16).map(|i| m[(i, l)] * g[i]).sum();
            assert_abs_diff_eq!(tg[l], expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn remainder_matches_difference_and_stays_accurate_for_small_offsets() {
        let grid = SpectralGrid::new(32).unwrap();
        let f: Vec<f64> = (0..32).map(|i| ((i * 5 + 1) % 13) as f64 * 0.2 - 1.0).collect();
        let w = 0.173;
        let r = grid.apply(&f, Multiplier::Remainder(w));
        let s = grid.apply(&f, Multiplier::Shift(w));
        let d = grid.apply(&f, Multiplier::Derivative);
        for i in 0..32 {
            assert_abs_diff_eq!(r[i], s[i] - f[i] - w * d[i], epsilon = 1e-10);
        }
        // cos 2πx: remainder at x = 0 is cos 2πw − 1 = −2 sin²(πw).
        let c: Vec<f64> = (0..32).map(|i| (2.0 * PI * i as f64 / 32.0).cos()).collect();
        let w = 1e-4;
        let r = grid.apply(&c, Multiplier::Remainder(w));
        let exact = -2.0 * (PI * w).sin().powi(2);
        assert!((r[0] - exact).abs() < 1e-12 * exact.abs());
    }

    #[test]
    fn integer_shift_is_a_permutation() {
        let grid = SpectralGrid::new(8).unwrap();
        let f: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let s = grid.apply(&f, Multiplier::Shift(3.0 / 8.0));
        for i in 0..8 {
            assert_abs_diff_eq!(s[i], f[(i + 3) % 8], epsilon = 1e-12);
        }
    }

    #[test]
    fn apply_two_matches_separate_applications() {
        let grid = SpectralGrid::new(32).unwrap();
        let f: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).cos() + 0.1 * i as f64).collect();
        let (a, b) = grid.apply_two(&f, Multiplier::Shift(0.013), Multiplier::ShiftedDerivative(0.013));
        let a2 = grid.apply(&f, Multiplier::Shift(0.013));
        let b2 = grid.apply(&f, Multiplier::ShiftedDerivative(0.013));
        for i in 0..32 {
            assert_abs_diff_eq!(a[i], a2[i], epsilon = 1e-12);
            assert_abs_diff_eq!(b[i], b2[i], epsilon = 1e-10);
        }
    }
}
