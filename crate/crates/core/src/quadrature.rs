//! Quadrature in the offset variable w ∈ [−½, ½] for integrands of the form |w|^α f(w).
//!
//! Each cell [k/N, (k+1)/N] (and its mirror image) carries Gauss–Legendre
//! abscissae; the weights are product-integration weights, exact for
//! |w|^α × (polynomial of degree < points per cell). Abscissae sit at a few
//! fixed fractional positions inside grid cells, so evaluating a periodic field
//! at x_i + w reduces to one spectral shift per distinct fractional position
//! plus an index permutation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ratio between consecutive levels of the optional geometric refinement of the
/// cells next to w = 0.
const GRADING_RATIO: f64 = 0.15;

/// Order of the Gauss–Legendre rule used for the moments of |w|^α on regular cells.
const MOMENT_ORDER: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureOptions {
    /// Gauss–Legendre points per cell (1..=8).
    pub points_per_cell: usize,
    /// Extra geometric refinement levels of the two cells adjacent to w = 0.
    pub grading_levels: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            points_per_cell: 3,
            grading_levels: 0,
        }
    }
}

/// A quadrature abscissa w together with the data needed to sample x_i + w on the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadNode {
    /// Offset in parameter units.
    pub w: f64,
    /// Index into [`QuadratureGrid::offsets`]: the fractional part of w·N.
    pub offset: usize,
    /// Integer part: x_i + w = x_{(i + shift) mod N} + offsets[offset].
    pub shift: usize,
    /// Weight against the singular factor: ∫|w|^α f ≈ Σ weight · f(w).
    pub weight: f64,
    /// weight / |w|^α, the weight for the full integrand.
    pub density: f64,
}

#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    n: usize,
    alpha: f64,
    options: QuadratureOptions,
    offsets: Vec<f64>,
    nodes: Vec<QuadNode>,
    by_offset: Vec<Vec<usize>>,
}

impl QuadratureGrid {
    /// Builds the rule for grid size `n` and singular exponent `alpha > −1`.
    pub fn new(n: usize, alpha: f64, options: QuadratureOptions) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::config(format!(
                "quadrature needs an even grid of at least 8 nodes, got {n}"
            )));
        }
        if !(alpha > -1.0) || !alpha.is_finite() {
            return Err(Error::parameter(format!(
                "singular exponent must exceed −1, got {alpha}"
            )));
        }
        if options.points_per_cell == 0 || options.points_per_cell > 8 {
            return Err(Error::config(format!(
                "points per cell must lie in 1..=8, got {}",
                options.points_per_cell
            )));
        }
        let h = 1.0 / n as f64;
        let q = options.points_per_cell;
        let mut positive: Vec<(f64, f64)> = Vec::with_capacity(n / 2 * q);

        // Cells adjacent to zero, optionally refined geometrically.
        let mut edges = vec![0.0];
        for level in (0..options.grading_levels).rev() {
            edges.push(h * GRADING_RATIO.powi(level as i32 + 1));
        }
        edges.push(h);
        for win in edges.windows(2) {
            positive.extend(cell_rule(win[0], win[1], alpha, q)?);
        }
        for k in 1..n / 2 {
            positive.extend(cell_rule(k as f64 * h, (k + 1) as f64 * h, alpha, q)?);
        }

        let mut offsets: Vec<f64> = Vec::new();
        let mut nodes = Vec::with_capacity(2 * positive.len());
        for &(w, weight) in &positive {
            for signed in [w, -w] {
                let scaled = signed * n as f64;
                let mut shift = scaled.floor();
                let mut frac = scaled - shift;
                // Positions that land on a grid line up to roundoff are exact integer shifts.
                if frac > 1.0 - 1e-12 {
                    shift += 1.0;
                    frac = 0.0;
                }
                let frac_param = frac * h;
                let offset = match offsets
                    .iter()
                    .position(|&o: &f64| (o - frac_param).abs() < 1e-9 * h)
                {
                    Some(idx) => idx,
                    None => {
                        offsets.push(frac_param);
                        offsets.len() - 1
                    }
                };
                let shift = (shift as i64).rem_euclid(n as i64) as usize;
                nodes.push(QuadNode {
                    w: signed,
                    offset,
                    shift,
                    weight,
                    density: weight / signed.abs().powf(alpha),
                });
            }
        }
        let mut by_offset = vec![Vec::new(); offsets.len()];
        for (idx, node) in nodes.iter().enumerate() {
            by_offset[node.offset].push(idx);
        }
        Ok(QuadratureGrid {
            n,
            alpha,
            options,
            offsets,
            nodes,
            by_offset,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn options(&self) -> QuadratureOptions {
        self.options
    }

    /// Distinct fractional offsets (parameter units, in [0, 1/N)).
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn nodes(&self) -> &[QuadNode] {
        &self.nodes
    }

    /// Node indices grouped by fractional offset.
    pub fn nodes_by_offset(&self) -> &[Vec<usize>] {
        &self.by_offset
    }

    /// Σ weights, which should reproduce ∫_{−½}^{½} |w|^α dw.
    pub fn weight_sum(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    /// ∫_{−½}^{½} |w|^α dw.
    pub fn exact_weight_integral(&self) -> f64 {
        2.0 * 0.5_f64.powf(self.alpha + 1.0) / (self.alpha + 1.0)
    }

    /// ∫ |w|^α f(w) dw for a function of the offset.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(n.w)).sum()
    }

    /// Copy of the rule with every weight passed through `f`; used to build
    /// deliberately broken rules for self-checks.
    pub fn map_weights(&self, mut f: impl FnMut(&QuadNode) -> f64) -> Self {
        let mut out = self.clone();
        for node in &mut out.nodes {
            node.weight = f(node);
            node.density = node.weight / node.w.abs().powf(self.alpha);
        }
        out
    }
}

/// Gauss–Legendre abscissae and weights on [−1, 1].
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; order];
    let mut ws = vec![0.0; order];
    let m = order.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        xs[order - 1 - i] = x;
        ws[i] = w;
        ws[order - 1 - i] = w;
    }
    (xs, ws)
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if order == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=order {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = order as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Abscissae and product weights on [a, b] ⊂ [0, ∞) for the weight w^α.
fn cell_rule(a: f64, b: f64, alpha: f64, q: usize) -> Result<Vec<(f64, f64)>> {
    let (gx, _) = gauss_legendre(q);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let pts: Vec<f64> = gx.iter().map(|&x| mid + half * x).collect();
    // Moments of w^α against the scaled monomials u^m, u = (w − mid)/half ∈ [−1, 1].
    let moments: Vec<f64> = if a == 0.0 {
        // u = 2w/b − 1; expand (2w/b − 1)^m binomially and integrate w^{α+j} exactly.
        (0..q)
            .map(|m| {
                let mut acc = 0.0;
                let mut binom = 1.0;
                for j in 0..=m {
                    if j > 0 {
                        binom *= (m - j + 1) as f64 / j as f64;
                    }
                    let sign = if (m - j) % 2 == 0 { 1.0 } else { -1.0 };
                    acc += sign * binom * 2f64.powi(j as i32) * b.powf(alpha + 1.0)
                        / (alpha + j as f64 + 1.0);
                }
                acc
            })
            .collect()
    } else {
        let (mx, mw) = gauss_legendre(MOMENT_ORDER);
        (0..q)
            .map(|m| {
                mx.iter()
                    .zip(&mw)
                    .map(|(&u, &wt)| half * wt * (mid + half * u).powf(alpha) * u.powi(m as i32))
                    .sum()
            })
            .collect()
    };
    let vander = DMatrix::from_fn(q, q, |m, j| gx[j].powi(m as i32));
    let rhs = DVector::from_vec(moments);
    let weights = vander.lu().solve(&rhs).ok_or_else(|| Error::LinearAlgebra {
        message: "singular Vandermonde system in quadrature construction".into(),
        condition: f64::INFINITY,
    })?;
    Ok(pts.into_iter().zip(weights.iter().copied()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for order in 1..=8 {
            let (x, w) = gauss_legendre(order);
            for deg in 0..2 * order {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-13, "order {order} deg {deg}");
            }
        }
    }

    #[test]
    fn weights_reproduce_singular_moments() {
        for &alpha in &[-0.6, -0.2, 0.0, 0.5, 0.9] {
            let grid = QuadratureGrid::new(64, alpha, QuadratureOptions::default()).unwrap();
            assert_relative_eq!(grid.weight_sum(), grid.exact_weight_integral(), max_relative = 1e-13);
            // Exact for |w|^α w² (piecewise quadratic times the weight).
            let approx = grid.integrate(|w| w * w);
            let exact = 2.0 * 0.5_f64.powf(alpha + 3.0) / (alpha + 3.0);
            assert_relative_eq!(approx, exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn offsets_are_few_and_consistent() {
        let n = 32;
        let grid = QuadratureGrid::new(n, -0.5, QuadratureOptions::default()).unwrap();
        assert_eq!(grid.offsets().len(), 3);
        for node in grid.nodes() {
            let recon = node.shift as f64 / n as f64 + grid.offsets()[node.offset];
            let diff = (recon - node.w).rem_euclid(1.0);
            assert!(diff.min(1.0 - diff) < 1e-13);
        }
        let graded = QuadratureGrid::new(
            n,
            -0.5,
            QuadratureOptions {
                points_per_cell: 3,
                grading_levels: 2,
            },
        )
        .unwrap();
        assert_relative_eq!(graded.weight_sum(), graded.exact_weight_integral(), max_relative = 1e-13);
    }

    #[test]
    fn smooth_integrand_converges_fast() {
        // ∫ |w|^α cos(2πw) dw against a fine reference.
        let alpha = -0.5;
        let reference = QuadratureGrid::new(2048, alpha, QuadratureOptions::default())
            .unwrap()
            .integrate(|w| (2.0 * std::f64::consts::PI * w).cos());
        let err = |n: usize| {
            let g = QuadratureGrid::new(n, alpha, QuadratureOptions::default()).unwrap();
            (g.integrate(|w| (2.0 * std::f64::consts::PI * w).cos()) - reference).abs()
        };
        let (e1, e2) = (err(16), err(32));
        assert!(e2 < e1 / 8.0, "e16={e1:e} e32={e2:e}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(QuadratureGrid::new(16, -1.0, QuadratureOptions::default()).is_err());
        assert!(QuadratureGrid::new(15, 0.0, QuadratureOptions::default()).is_err());
        let bad = QuadratureOptions {
            points_per_cell: 0,
            grading_levels: 0,
        };
        assert!(QuadratureGrid::new(16, 0.0, bad).is_err());
    }
}
