//! Periodic fractional Sobolev structure: the spectral H^s inner product, its
//! Riesz map, the Gagliardo seminorm and the difference operator φ.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Covector, Field};
use crate::quadrature::{QuadratureGrid, QuadratureOptions};
use crate::spectral::{Multiplier, SpectralGrid};

/// Sobolev order s ∈ (3/2, 2); the energy exponent is p = 2s + 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SobolevOrder(f64);

impl SobolevOrder {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 1.5 && s < 2.0) {
            return Err(Error::parameter(format!(
                "Sobolev order must lie strictly between 3/2 and 2, got {s}"
            )));
        }
        Ok(SobolevOrder(s))
    }

    pub fn s(self) -> f64 {
        self.0
    }

    /// p = 2s + 1.
    pub fn p(self) -> f64 {
        2.0 * self.0 + 1.0
    }

    /// σ = s − 1, the order of the derivative space.
    pub fn sigma(self) -> f64 {
        self.0 - 1.0
    }

    /// ε = (2 − s)/2, the splitting margin used by the second-derivative bounds.
    pub fn epsilon(self) -> f64 {
        (2.0 - self.0) / 2.0
    }

    /// Exponent of the |w| singularity of energy-type integrands, 4 − p.
    pub fn singular_exponent(self) -> f64 {
        4.0 - self.p()
    }
}

impl TryFrom<f64> for SobolevOrder {
    type Error = Error;
    fn try_from(s: f64) -> Result<Self> {
        SobolevOrder::new(s)
    }
}

impl From<SobolevOrder> for f64 {
    fn from(o: SobolevOrder) -> f64 {
        o.0
    }
}

/// H^s on the periodic grid with multiplier m_k = 1 + |2πk|^{2s}.
#[derive(Clone, Debug)]
pub struct SobolevSpace {
    s: f64,
    grid: Arc<SpectralGrid>,
    symbol: Vec<f64>,
}

impl SobolevSpace {
    pub fn new(n_nodes: usize, order: SobolevOrder) -> Result<Self> {
        Self::with_exponent(n_nodes, order.s())
    }

    /// Any positive order; used for auxiliary spaces such as H^{s−1}.
    pub fn with_exponent(n_nodes: usize, s: f64) -> Result<Self> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::parameter(format!("Sobolev exponent must be non-negative, got {s}")));
        }
        let grid = SpectralGrid::new(n_nodes)?;
        let symbol = (0..n_nodes)
            .map(|k| 1.0 + (2.0 * PI * grid.frequency(k).abs()).powf(2.0 * s))
            .collect();
        Ok(SobolevSpace { s, grid, symbol })
    }

    pub fn exponent(&self) -> f64 {
        self.s
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.len()
    }

    /// m_k for FFT bin `k`.
    pub fn symbol(&self, k: usize) -> f64 {
        self.symbol[k]
    }

    fn check(&self, f: &Field) -> Result<()> {
        if f.n_nodes() != self.n_nodes() {
            return Err(Error::dimension(format!(
                "field on {} nodes, space on {}",
                f.n_nodes(),
                self.n_nodes()
            )));
        }
        Ok(())
    }

    /// ⟨h, k⟩_{H^s} = Σ_k m_k Re(conj(ĥ_k)·k̂_k), summed over components.
    pub fn inner(&self, h: &Field, k: &Field) -> Result<f64> {
        self.check(h)?;
        h.check_shape(k)?;
        let mut acc = 0.0;
        for a in 0..h.dim() {
            let hc = self.grid.coefficients(h.component(a));
            let kc = self.grid.coefficients(k.component(a));
            acc += hc
                .iter()
                .zip(&kc)
                .zip(&self.symbol)
                .map(|((x, y), m)| m * (x.conj() * y).re)
                .sum::<f64>();
        }
        Ok(acc)
    }

    pub fn norm_sq(&self, h: &Field) -> Result<f64> {
        self.inner(h, h)
    }

    fn scale_modes(&self, f: &Field, factor: impl Fn(f64) -> f64) -> Field {
        let mut out = Field::zeros(f.n_nodes(), f.dim());
        for a in 0..f.dim() {
            let mut c = self.grid.coefficients(f.component(a));
            for (ck, &m) in c.iter_mut().zip(&self.symbol) {
                *ck *= factor(m);
            }
            out.component_mut(a).copy_from_slice(&self.grid.synthesize(&c));
        }
        out
    }

    /// The covector h ↦ ⟨g, h⟩_{H^s} in the nodal pairing.
    pub fn lower(&self, g: &Field) -> Result<Covector> {
        self.check(g)?;
        let n = self.n_nodes() as f64;
        Ok(Covector(self.scale_modes(g, |m| m / n)))
    }

    /// Riesz representative: the g with ⟨g, h⟩_{H^s} = ℓ(h) for all h.
    pub fn riesz(&self, ell: &Covector) -> Result<Field> {
        self.check(ell.field())?;
        let n = self.n_nodes() as f64;
        Ok(self.scale_modes(ell.field(), |m| n / m))
    }

    /// ℓ(Rℓ), the squared dual norm.
    pub fn dual_norm_sq(&self, ell: &Covector) -> Result<f64> {
        Ok(ell.field().dot(&self.riesz(ell)?))
    }

    /// N×N Gram matrix of one component in the nodal basis (identical for all components).
    pub fn gram_block(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut e0 = vec![0.0; n];
        e0[0] = 1.0;
        let mut c = self.grid.coefficients(&e0);
        for (ck, &m) in c.iter_mut().zip(&self.symbol) {
            *ck *= m / n as f64;
        }
        let col = self.grid.synthesize(&c);
        DMatrix::from_fn(n, n, |i, l| col[(i + n - l) % n])
    }
}

/// [k]²_σ = ∬ |k(x+z) − k(x)|² / |z|^{2σ+1} dz dx over |z| ≤ ½.
///
/// The z-integral is written as ∫ |z|^{1−2σ} · (|k(x+z) − k(x)|²/z²) dz and
/// evaluated with product weights for the singular factor; k(x+z) is the
/// trigonometric interpolant sampled by spectral shifts.
pub fn gagliardo_seminorm_sq(sigma: f64, k: &Field) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::parameter(format!(
            "Gagliardo order must lie in (0,1), got {sigma}"
        )));
    }
    let n = k.n_nodes();
    let grid = SpectralGrid::new(n)?;
    let quad = QuadratureGrid::new(n, 1.0 - 2.0 * sigma, QuadratureOptions::default())?;
    let mut acc = 0.0;
    for (o, members) in quad.nodes_by_offset().iter().enumerate() {
        let tau = quad.offsets()[o];
        let shifted = k.map_spectral(&grid, Multiplier::Shift(tau));
        for &j in members {
            let node = quad.nodes()[j];
            let mut row = 0.0;
            for a in 0..k.dim() {
                let base = k.component(a);
                let sh = shifted.component(a);
                for i in 0..n {
                    let d = sh[(i + node.shift) % n] - base[i];
                    row += d * d;
                }
            }
            acc += node.weight * row / (node.w * node.w);
        }
    }
    Ok(acc / n as f64)
}

/// Values of φ(k)(x_i, w_j) = |w_j|^{−s−½} ∫_{x_i}^{x_i+w_j} (k(x_i) − k(θ)) dθ on the
/// grid × quadrature nodes.
#[derive(Clone, Debug)]
pub struct PhiValues {
    n: usize,
    dim: usize,
    quad: QuadratureGrid,
    /// values[(j * dim + a) * n + i].
    values: Vec<f64>,
}

impl PhiValues {
    pub fn get(&self, i: usize, node: usize, a: usize) -> f64 {
        self.values[(node * self.dim + a) * self.n + i]
    }

    pub fn n_offsets(&self) -> usize {
        self.quad.nodes().len()
    }

    pub fn quadrature(&self) -> &QuadratureGrid {
        &self.quad
    }

    /// ‖φ(k)‖² in L²(𝕋 × (−½, ½)).
    pub fn norm_sq(&self) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for (j, node) in self.quad.nodes().iter().enumerate() {
            let block = &self.values[j * self.dim * n..(j + 1) * self.dim * n];
            acc += node.density * block.iter().map(|v| v * v).sum::<f64>();
        }
        acc / n as f64
    }
}

/// Evaluates φ(k) with the inner integral taken exactly for the trigonometric interpolant of k.
///
/// The quadrature rule must have singular exponent 3 − 2s, the behaviour of |φ|² near w = 0.
pub fn phi_operator(order: SobolevOrder, k: &Field, quad: &QuadratureGrid) -> Result<PhiValues> {
    let n = k.n_nodes();
    if quad.n_nodes() != n {
        return Err(Error::dimension(format!(
            "quadrature built for {} nodes, field has {n}",
            quad.n_nodes()
        )));
    }
    let expected = 3.0 - 2.0 * order.s();
    if (quad.alpha() - expected).abs() > 1e-12 {
        return Err(Error::parameter(format!(
            "φ needs a quadrature with singular exponent {expected}, got {}",
            quad.alpha()
        )));
    }
    let grid = SpectralGrid::new(n)?;
    let dim = k.dim();
    let power = order.s() + 0.5;
    let mut values = vec![0.0; quad.nodes().len() * dim * n];
    for a in 0..dim {
        let comp = k.component(a);
        let coeffs = grid.coefficients(comp);
        let mean = coeffs[0].re;
        let nyq = coeffs[n / 2].re;
        // Antiderivative of the non-constant, non-Nyquist modes.
        let anti: Vec<Complex64> = coeffs
            .iter()
            .enumerate()
            .map(|(b, c)| {
                if b == 0 || b == n / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    c / Complex64::new(0.0, 2.0 * PI * grid.frequency(b))
                }
            })
            .collect();
        let prim = grid.synthesize(&anti);
        let centred: Vec<f64> = comp.iter().map(|v| v - mean).collect();
        for (o, members) in quad.nodes_by_offset().iter().enumerate() {
            let tau = quad.offsets()[o];
            let mut c = anti.clone();
            for (b, cb) in c.iter_mut().enumerate() {
                *cb *= grid.multiplier(Multiplier::Shift(tau), b);
            }
            let prim_shifted = grid.synthesize(&c);
            for &j in members {
                let node = quad.nodes()[j];
                let w = node.w;
                let scale = w.abs().powf(-power);
                let nyq_part = nyq * (PI * n as f64 * w).sin() / (PI * n as f64);
                let out = &mut values[(j * dim + a) * n..(j * dim + a + 1) * n];
                for i in 0..n {
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    let integral = prim_shifted[(i + node.shift) % n] - prim[i] + sign * nyq_part;
                    out[i] = scale * (centred[i] * w - integral);
                }
            }
        }
    }
    Ok(PhiValues {
        n,
        dim,
        quad: quad.clone(),
        values,
    })
}

/// The quadrature rule matched to [`phi_operator`].
pub fn phi_quadrature(n_nodes: usize, order: SobolevOrder) -> Result<QuadratureGrid> {
    QuadratureGrid::new(n_nodes, 3.0 - 2.0 * order.s(), QuadratureOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn order() -> SobolevOrder {
        SobolevOrder::new(1.75).unwrap()
    }

    #[test]
    fn order_validation() {
        assert!(SobolevOrder::new(1.5).is_err());
        assert!(SobolevOrder::new(2.0).is_err());
        let o = order();
        assert_relative_eq!(o.p(), 4.5);
        assert_relative_eq!(o.sigma(), 0.75);
        assert_relative_eq!(o.epsilon(), 0.125);
    }

    #[test]
    fn inner_product_examples() {
        let space = SobolevSpace::new(64, order()).unwrap();
        let c = Field::from_fn(64, 2, |_| vec![2.0, -1.0]);
        assert_relative_eq!(space.norm_sq(&c).unwrap(), 5.0, max_relative = 1e-13);
        let m1 = Field::from_fn(64, 1, |x| vec![(2.0 * PI * x).cos()]);
        let m2 = Field::from_fn(64, 1, |x| vec![(4.0 * PI * x).cos()]);
        assert!(space.inner(&m1, &m2).unwrap().abs() < 1e-13);
    }

    #[test]
    fn circle_norm_matches_direct_mode_sum() {
        // Direct DFT sums on N = 8, written out without the FFT.
        let n = 8;
        let s = 1.75;
        let space = SobolevSpace::new(n, order()).unwrap();
        let h = Field::from_fn(n, 2, |x| vec![(2.0 * PI * x).cos(), (2.0 * PI * x).sin()]);
        let mut expected = 0.0;
        for a in 0..2 {
            for k in 0..n {
                let freq = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
                let (mut re, mut im) = (0.0, 0.0);
                for i in 0..n {
                    let ang = -2.0 * PI * (k * i) as f64 / n as f64;
                    re += h.get(i, a) * ang.cos() / n as f64;
                    im += h.get(i, a) * ang.sin() / n as f64;
                }
                expected += (1.0 + (2.0 * PI * freq.abs()).powf(2.0 * s)) * (re * re + im * im);
            }
        }
        assert_relative_eq!(space.norm_sq(&h).unwrap(), expected, max_relative = 1e-13);
        assert_relative_eq!(expected, 1.0 + (2.0 * PI).powf(3.5), max_relative = 1e-13);
    }

    #[test]
    fn riesz_matches_dense_solve() {
        let n = 16;
        let space = SobolevSpace::new(n, order()).unwrap();
        let ell = Covector(Field::from_fn(n, 1, |x| vec![(6.0 * PI * x).sin() + 0.3]));
        let g = space.riesz(&ell).unwrap();
        let gram = space.gram_block();
        let rhs = nalgebra::DVector::from_column_slice(ell.field().component(0));
        let dense = gram.lu().solve(&rhs).unwrap();
        let scale = dense.amax();
        for i in 0..n {
            assert!((g.get(i, 0) - dense[i]).abs() < 1e-10 * scale, "{} vs {}", g.get(i, 0), dense[i]);
        }
    }

    #[test]
    fn gagliardo_examples() {
        let c = Field::from_fn(32, 2, |_| vec![1.0, 3.0]);
        assert!(gagliardo_seminorm_sq(0.75, &c).unwrap() < 1e-20);
        let h = Field::from_fn(256, 2, |x| vec![(2.0 * PI * x).cos(), (2.0 * PI * x).sin()]);
        let v = gagliardo_seminorm_sq(0.75, &h).unwrap();
        let v3 = gagliardo_seminorm_sq(0.75, &h.scaled(3.0)).unwrap();
        assert_relative_eq!(v3, 9.0 * v, max_relative = 1e-12);
        let fine = Field::from_fn(4096, 2, |x| vec![(2.0 * PI * x).cos(), (2.0 * PI * x).sin()]);
        let reference = gagliardo_seminorm_sq(0.75, &fine).unwrap();
        assert_relative_eq!(v, reference, max_relative = 1e-4);
        assert!(gagliardo_seminorm_sq(1.0, &h).is_err());
    }

    #[test]
    fn phi_vanishes_on_constants_and_is_linear() {
        let n = 32;
        let quad = phi_quadrature(n, order()).unwrap();
        let c = Field::from_fn(n, 2, |_| vec![0.7, -2.0]);
        let phi = phi_operator(order(), &c, &quad).unwrap();
        assert!(phi.values.iter().all(|v| v.abs() < 1e-12));
        let k1 = Field::from_fn(n, 2, |x| vec![(2.0 * PI * x).sin(), (6.0 * PI * x).cos()]);
        let k2 = Field::from_fn(n, 2, |x| vec![x * (1.0 - x), (4.0 * PI * x).sin()]);
        let combo = k1.scaled(2.5).add_scaled(1.0, &k2);
        let p1 = phi_operator(order(), &k1, &quad).unwrap();
        let p2 = phi_operator(order(), &k2, &quad).unwrap();
        let pc = phi_operator(order(), &combo, &quad).unwrap();
        for idx in 0..pc.values.len() {
            let lin = 2.5 * p1.values[idx] + p2.values[idx];
            assert!((pc.values[idx] - lin).abs() <= 1e-11 * (1.0 + lin.abs()));
        }
    }
}
