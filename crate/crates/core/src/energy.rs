//! The generalized tangent-point energy TP^(p,2) and the classical TP^q.

use crate::curve::{DiscreteCurve, SEPARATION_FLOOR};
use crate::error::{Error, Result};
use crate::field::Covector;
use crate::pairs::{LocalCovector, PairEngine};
use crate::quadrature::{QuadratureGrid, QuadratureOptions};
use crate::sobolev::SobolevOrder;

/// TP^(p,2) with p = 2s + 1, bound to a quadrature rule on a fixed grid.
///
/// The energy is evaluated as
/// Σ_i (1/N) Σ_j ω̃_j |P⊥_{γ′(x_i)} Δγ|² / |Δγ|^p · |γ′(x_i)| |γ′(x_i + w_j)|,
/// with Δγ = γ(x_i + w_j) − γ(x_i) taken from the trigonometric interpolant.
#[derive(Clone, Debug)]
pub struct TangentPointEnergy {
    order: SobolevOrder,
    quad: QuadratureGrid,
}

/// The factors F, Λ, ψ of the integrand at one (x_i, w_j) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegrandFactors {
    pub f: Vec<f64>,
    pub lambda: f64,
    pub psi: f64,
}

impl TangentPointEnergy {
    /// Energy on an `n_nodes` grid with the default quadrature.
    pub fn new(order: SobolevOrder, n_nodes: usize) -> Result<Self> {
        let quad = QuadratureGrid::new(n_nodes, order.singular_exponent(), QuadratureOptions::default())?;
        Ok(TangentPointEnergy { order, quad })
    }

    pub fn with_quadrature(order: SobolevOrder, quad: QuadratureGrid) -> Result<Self> {
        let expected = order.singular_exponent();
        if (quad.alpha() - expected).abs() > 1e-12 {
            return Err(Error::parameter(format!(
                "quadrature singular exponent {} does not match 4 − p = {expected}",
                quad.alpha()
            )));
        }
        Ok(TangentPointEnergy { order, quad })
    }

    pub fn order(&self) -> SobolevOrder {
        self.order
    }

    pub fn p(&self) -> f64 {
        self.order.p()
    }

    pub fn quadrature(&self) -> &QuadratureGrid {
        &self.quad
    }

    pub fn n_nodes(&self) -> usize {
        self.quad.n_nodes()
    }

    pub(crate) fn engine<'a>(&'a self, curve: &'a DiscreteCurve) -> Result<PairEngine<'a>> {
        PairEngine::new(curve, &self.quad)
    }

    pub fn energy(&self, curve: &DiscreteCurve) -> Result<f64> {
        let p = self.p();
        let engine = self.engine(curve)?;
        engine.sum(&[], |g, _| g.weight * g.nt * g.nu * g.k2 * g.rho.powf(-p))
    }

    /// The differential DTP(γ) as a covector in the nodal pairing.
    pub fn differential(&self, curve: &DiscreteCurve) -> Result<Covector> {
        let p = self.p();
        let engine = self.engine(curve)?;
        engine.covector(|g, out: &mut LocalCovector| {
            let base = g.weight * g.nt * g.nu * g.rho.powf(-p);
            // 2⟨L_γγ, L_γh⟩ − p|L_γγ|²⟨d, Δh⟩/ρ² + |L_γγ|²(⟨t,h′(x)⟩/|t|² + ⟨u,h′(y)⟩/|u|²).
            let two = 2.0 * base;
            let chord = -p * base * g.k2 / g.rho2;
            let ft = g.c / g.nt;
            let st = base * g.k2 / (g.nt * g.nt);
            let su = base * g.k2 / (g.nu * g.nu);
            for a in 0..g.dim {
                let dy = two * g.lg[a] + chord * g.d[a];
                out.y[a] += dy;
                out.x[a] -= dy;
                out.t[a] += -two * ft * g.lg[a] + st * g.t[a];
                out.u[a] += su * g.u[a];
            }
        })
    }

    /// F, Λ, ψ at (x_i, w) with γ(x_i + w) evaluated directly from the interpolant.
    pub fn integrand_factors(&self, curve: &DiscreteCurve, i: usize, w: f64) -> Result<IntegrandFactors> {
        if w == 0.0 {
            return Err(Error::precondition("integrand factors need w ≠ 0"));
        }
        let n = curve.n_nodes();
        let dim = curve.dim();
        let grid = curve.grid();
        let x = i as f64 / n as f64;
        let s = self.order.s();
        let mut d = vec![0.0; dim];
        let mut u2 = 0.0;
        for a in 0..dim {
            let coeffs = grid.coefficients(curve.nodes().component(a));
            d[a] = grid.evaluate(&coeffs, x + w) - curve.nodes().get(i, a);
            u2 += grid.evaluate_derivative(&coeffs, x + w).powi(2);
        }
        let rho = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(rho > SEPARATION_FLOOR * curve.length()) {
            return Err(Error::EnergyBlowup { node: i, offset: w, chord: rho });
        }
        let tangent = curve.unit_tangent(i);
        let arc = curve.arclength_between(x, w);
        let scale = w.abs().powf(-s - 0.5);
        // H₁γ = |w|^{−s−½}(Δγ − T·arclength), H₂ = T⟨T, H₁γ⟩.
        let h1: Vec<f64> = (0..dim).map(|a| scale * (d[a] - tangent[a] * arc)).collect();
        let along: f64 = (0..dim).map(|a| tangent[a] * h1[a]).sum();
        let f = (0..dim).map(|a| h1[a] - tangent[a] * along).collect();
        let lambda = (w.abs() / rho).powf(self.p() / 2.0);
        let psi = (curve.speed()[i] * u2.sqrt()).sqrt();
        Ok(IntegrandFactors { f, lambda, psi })
    }

    /// Σ (1/N) ω̃_j |F Λ ψ|² over the grid, built from [`integrand_factors`](Self::integrand_factors).
    pub fn factorized_energy(&self, curve: &DiscreteCurve) -> Result<f64> {
        let n = curve.n_nodes();
        let mut total = 0.0;
        for node in self.quad.nodes() {
            let mut row = 0.0;
            for i in 0..n {
                let fac = self.integrand_factors(curve, i, node.w)?;
                let f2: f64 = fac.f.iter().map(|v| v * v).sum();
                row += f2 * (fac.lambda * fac.psi).powi(2);
            }
            total += node.density * row;
        }
        Ok(total / n as f64)
    }
}

/// Classical TP^q = ∬ r_TP(x, y)^{−q} |γ′(x)||γ′(y)|, with 1/r_TP = 2|P⊥Δγ|/|Δγ|².
///
/// The integrand is bounded near the diagonal, so `quad` must have singular exponent 0.
pub fn classical_energy(curve: &DiscreteCurve, q: f64, quad: &QuadratureGrid) -> Result<f64> {
    if !(q >= 2.0) {
        return Err(Error::parameter(format!("classical exponent q must be at least 2, got {q}")));
    }
    if quad.alpha() != 0.0 {
        return Err(Error::parameter(
            "classical tangent-point energy needs a quadrature with singular exponent 0",
        ));
    }
    let engine = PairEngine::new(curve, quad)?;
    engine.sum(&[], |g, _| {
        let inv_r = 2.0 * g.k2.sqrt() / g.rho2;
        g.weight * g.nt * g.nu * inv_r.powf(q)
    })
}
