//! Evaluation of double integrals over (x, w) pairs.
//!
//! Every energy-type quantity here is a sum over grid points x_i and
//! quadrature offsets w_j of a local expression in γ, γ′ at x_i and at
//! y = x_i + w_j (plus the same data of up to two displacement fields). The
//! engine precomputes the shifted samples once per fractional offset, then
//! hands each pair to a closure. Reductions are performed over a fixed task
//! partition in a fixed order, so results do not depend on the thread count.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::curve::{DiscreteCurve, SEPARATION_FLOOR};
use crate::error::{Error, Result};
use crate::field::{Covector, DisplacementField, Field, MAX_DIM};
use crate::quadrature::QuadratureGrid;
use crate::spectral::{Multiplier, SpectralGrid};

/// Quadrature nodes per task.
const NODES_PER_TASK: usize = 24;

/// Offsets closer than this many grid cells use the cancellation-free chord remainder.
const NEAR_CELLS: f64 = 4.0;

/// Neumaier summation: energies are sums of ~10⁵ terms and the flow compares
/// values that differ in the last few digits.
#[derive(Clone, Copy, Debug, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: CompensatedSum) {
        self.add(other.sum);
        self.add(other.carry);
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Geometry of γ at a pair (x_i, y = x_i + w).
#[derive(Clone, Copy, Debug)]
pub(crate) struct PairGeom {
    /// Quadrature weight of the pair for the full integrand (density / N).
    pub weight: f64,
    pub dim: usize,
    /// Δγ = γ(y) − γ(x).
    pub d: [f64; MAX_DIM],
    /// γ′(x).
    pub t: [f64; MAX_DIM],
    /// γ′(y).
    pub u: [f64; MAX_DIM],
    pub rho2: f64,
    pub rho: f64,
    /// |γ′(x)|, |γ′(y)|.
    pub nt: f64,
    pub nu: f64,
    /// ⟨t, d⟩.
    pub e: f64,
    /// ⟨T, d⟩ with T = t/|t|.
    pub c: f64,
    /// L_γγ = d − T⟨T, d⟩.
    pub lg: [f64; MAX_DIM],
    /// |L_γγ|².
    pub k2: f64,
}

/// Values of a displacement field at a pair.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Local {
    pub x: [f64; MAX_DIM],
    pub t: [f64; MAX_DIM],
    pub y: [f64; MAX_DIM],
    pub u: [f64; MAX_DIM],
}

#[inline]
pub(crate) fn dot(a: &[f64; MAX_DIM], b: &[f64; MAX_DIM], dim: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..dim {
        s += a[k] * b[k];
    }
    s
}

impl PairGeom {
    /// Δh for a field's local data.
    #[inline]
    pub fn delta(&self, h: &Local) -> [f64; MAX_DIM] {
        let mut out = [0.0; MAX_DIM];
        for k in 0..self.dim {
            out[k] = h.y[k] - h.x[k];
        }
        out
    }

    /// L_γh = Δh − h′(x)⟨T, d⟩/|t|.
    #[inline]
    pub fn chord_defect(&self, h: &Local) -> [f64; MAX_DIM] {
        let mut out = [0.0; MAX_DIM];
        let f = self.c / self.nt;
        for k in 0..self.dim {
            out[k] = h.y[k] - h.x[k] - f * h.t[k];
        }
        out
    }

    #[inline]
    pub fn dot(&self, a: &[f64; MAX_DIM], b: &[f64; MAX_DIM]) -> f64 {
        dot(a, b, self.dim)
    }
}

/// Per-pair contribution to a covector, split by where the field is sampled.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct LocalCovector {
    pub x: [f64; MAX_DIM],
    pub t: [f64; MAX_DIM],
    pub y: [f64; MAX_DIM],
    pub u: [f64; MAX_DIM],
}

/// Derivative slot of a local variable, at x or at y.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Slot {
    T = 1,
    U = 3,
}

/// Dense local matrix over the 4n local variables (x, t, y, u blocks).
#[derive(Clone, Debug)]
pub(crate) struct LocalMatrix {
    dim: usize,
    pub data: Vec<f64>,
}

/// A linear functional on the local variables of a field.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct LocalVector {
    pub x: [f64; MAX_DIM],
    pub t: [f64; MAX_DIM],
    pub y: [f64; MAX_DIM],
    pub u: [f64; MAX_DIM],
}

impl LocalVector {
    fn block(&self, s: usize) -> &[f64; MAX_DIM] {
        match s {
            0 => &self.x,
            1 => &self.t,
            2 => &self.y,
            _ => &self.u,
        }
    }
}

impl LocalMatrix {
    fn new(dim: usize) -> Self {
        LocalMatrix {
            dim,
            data: vec![0.0; 16 * dim * dim],
        }
    }

    fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn idx(&self, sa: usize, a: usize, sb: usize, b: usize) -> usize {
        let n4 = 4 * self.dim;
        (sa * self.dim + a) * n4 + sb * self.dim + b
    }

    #[inline]
    pub fn get(&self, sa: usize, a: usize, sb: usize, b: usize) -> f64 {
        self.data[self.idx(sa, a, sb, b)]
    }

    /// Adds `coef · Σ_a ⟨h_{slot_a}, k_{slot_b}⟩` (identity coupling across components).
    #[inline]
    pub fn add_iso(&mut self, sa: Slot, sb: Slot, coef: f64) {
        for a in 0..self.dim {
            let idx = self.idx(sa as usize, a, sb as usize, a);
            self.data[idx] += coef;
        }
    }

    /// Adds `coef · Σ_{s,s′} ca[s] cb[s′] ⟨h_s, k_s′⟩` for isotropic combinations of slots.
    pub fn add_iso_outer(&mut self, ca: &[f64; 4], cb: &[f64; 4], coef: f64) {
        for sa in 0..4 {
            if ca[sa] == 0.0 {
                continue;
            }
            for sb in 0..4 {
                if cb[sb] == 0.0 {
                    continue;
                }
                let v = coef * ca[sa] * cb[sb];
                for a in 0..self.dim {
                    let idx = self.idx(sa, a, sb, a);
                    self.data[idx] += v;
                }
            }
        }
    }

    /// Adds the rank-one term `coef · (a·h)(b·k)`.
    pub fn add_outer(&mut self, a: &LocalVector, b: &LocalVector, coef: f64) {
        let n = self.dim;
        for sa in 0..4 {
            let ab = a.block(sa);
            for ia in 0..n {
                let va = coef * ab[ia];
                if va == 0.0 {
                    continue;
                }
                for sb in 0..4 {
                    let bb = b.block(sb);
                    let base = self.idx(sa, ia, sb, 0);
                    for ib in 0..n {
                        self.data[base + ib] += va * bb[ib];
                    }
                }
            }
        }
    }
}

/// Precomputed samples of a field at y = x_i + τ for every fractional offset τ.
struct Shifted {
    vals: Vec<Field>,
    ders: Vec<Field>,
}

fn shift_field(grid: &SpectralGrid, quad: &QuadratureGrid, values: &Field) -> Shifted {
    let mut vals = Vec::with_capacity(quad.offsets().len());
    let mut ders = Vec::with_capacity(quad.offsets().len());
    for &tau in quad.offsets() {
        let mut v = Field::zeros(values.n_nodes(), values.dim());
        let mut d = Field::zeros(values.n_nodes(), values.dim());
        for a in 0..values.dim() {
            let (sv, sd) = grid.apply_two(
                values.component(a),
                Multiplier::Shift(tau),
                Multiplier::ShiftedDerivative(tau),
            );
            v.component_mut(a).copy_from_slice(&sv);
            d.component_mut(a).copy_from_slice(&sd);
        }
        vals.push(v);
        ders.push(d);
    }
    Shifted { vals, ders }
}

/// Pair engine bound to a curve and a quadrature rule.
pub(crate) struct PairEngine<'a> {
    curve: &'a DiscreteCurve,
    quad: &'a QuadratureGrid,
    gamma: Shifted,
    /// γ(x_i + w) − γ(x_i) − wγ′(x_i) for near-diagonal quadrature nodes.
    near: Vec<Option<Field>>,
    floor: f64,
    tasks: Vec<(usize, std::ops::Range<usize>)>,
}

impl<'a> PairEngine<'a> {
    pub fn new(curve: &'a DiscreteCurve, quad: &'a QuadratureGrid) -> Result<Self> {
        if quad.n_nodes() != curve.n_nodes() {
            return Err(Error::dimension(format!(
                "quadrature built for {} nodes, curve has {}",
                quad.n_nodes(),
                curve.n_nodes()
            )));
        }
        let gamma = shift_field(curve.grid(), quad, curve.nodes());
        let n = curve.n_nodes();
        let near = quad
            .nodes()
            .iter()
            .map(|node| {
                (node.w.abs() * n as f64 <= NEAR_CELLS).then(|| {
                    let mut r = Field::zeros(n, curve.dim());
                    for a in 0..curve.dim() {
                        curve.grid().apply_into(
                            curve.nodes().component(a),
                            Multiplier::Remainder(node.w),
                            r.component_mut(a),
                        );
                    }
                    r
                })
            })
            .collect();
        let mut tasks = Vec::new();
        for (o, members) in quad.nodes_by_offset().iter().enumerate() {
            let mut start = 0;
            while start < members.len() {
                let end = (start + NODES_PER_TASK).min(members.len());
                tasks.push((o, start..end));
                start = end;
            }
        }
        Ok(PairEngine {
            curve,
            quad,
            gamma,
            near,
            floor: SEPARATION_FLOOR * curve.length(),
            tasks,
        })
    }

    fn check_fields(&self, fields: &[&DisplacementField]) -> Result<()> {
        for f in fields {
            if f.n_nodes() != self.curve.n_nodes() || f.dim() != self.curve.dim() {
                return Err(Error::dimension(format!(
                    "field ({} nodes, dim {}) does not match curve ({} nodes, dim {})",
                    f.n_nodes(),
                    f.dim(),
                    self.curve.n_nodes(),
                    self.curve.dim()
                )));
            }
        }
        Ok(())
    }

    #[inline]
    fn geom(&self, o: usize, node_idx: usize, i: usize) -> Result<PairGeom> {
        let node = self.quad.nodes()[node_idx];
        let n = self.curve.n_nodes();
        let dim = self.curve.dim();
        let m = (i + node.shift) % n;
        let nodes = self.curve.nodes();
        let deriv = self.curve.deriv();
        let sv = &self.gamma.vals[o];
        let sd = &self.gamma.ders[o];
        let mut g = PairGeom {
            weight: node.density / n as f64,
            dim,
            d: [0.0; MAX_DIM],
            t: [0.0; MAX_DIM],
            u: [0.0; MAX_DIM],
            rho2: 0.0,
            rho: 0.0,
            nt: self.curve.speed()[i],
            nu: 0.0,
            e: 0.0,
            c: 0.0,
            lg: [0.0; MAX_DIM],
            k2: 0.0,
        };
        let near = self.near[node_idx].as_ref();
        let mut rem = [0.0; MAX_DIM];
        let mut nu2 = 0.0;
        for a in 0..dim {
            g.t[a] = deriv.get(i, a);
            g.d[a] = match near {
                Some(r) => {
                    rem[a] = r.get(i, a);
                    rem[a] + node.w * g.t[a]
                }
                None => sv.get(m, a) - nodes.get(i, a),
            };
            g.u[a] = sd.get(m, a);
            g.rho2 += g.d[a] * g.d[a];
            g.e += g.t[a] * g.d[a];
            nu2 += g.u[a] * g.u[a];
        }
        g.rho = g.rho2.sqrt();
        if !(g.rho > self.floor) {
            return Err(Error::EnergyBlowup {
                node: i,
                offset: node.w,
                chord: g.rho,
            });
        }
        g.nu = nu2.sqrt();
        g.c = g.e / g.nt;
        // L_γγ annihilates wγ′(x), so near the diagonal it is built from the small remainder.
        let (base, f) = match near {
            Some(_) => (&rem, (0..dim).map(|a| g.t[a] * rem[a]).sum::<f64>() / (g.nt * g.nt)),
            None => (&g.d, g.e / (g.nt * g.nt)),
        };
        for a in 0..dim {
            g.lg[a] = base[a] - f * g.t[a];
            g.k2 += g.lg[a] * g.lg[a];
        }
        Ok(g)
    }

    #[inline]
    fn local(&self, field: &DisplacementField, shifted: &Shifted, o: usize, m: usize, i: usize) -> Local {
        let mut l = Local::default();
        for a in 0..self.curve.dim() {
            l.x[a] = field.values().get(i, a);
            l.t[a] = field.deriv().get(i, a);
            l.y[a] = shifted.vals[o].get(m, a);
            l.u[a] = shifted.ders[o].get(m, a);
        }
        l
    }

    /// Σ over all pairs of `f(geometry, field locals)`.
    pub fn sum<F>(&self, fields: &[&DisplacementField], f: F) -> Result<f64>
    where
        F: Fn(&PairGeom, &[Local]) -> f64 + Sync,
    {
        self.check_fields(fields)?;
        let grid = self.curve.grid();
        let shifted: Vec<Shifted> = fields
            .iter()
            .map(|h| shift_field(grid, self.quad, h.values()))
            .collect();
        let n = self.curve.n_nodes();
        let partial: Vec<Result<CompensatedSum>> = self
            .tasks
            .par_iter()
            .map(|(o, range)| {
                let members = &self.quad.nodes_by_offset()[*o];
                let mut locals = vec![Local::default(); fields.len()];
                let mut acc = CompensatedSum::default();
                for &node_idx in &members[range.clone()] {
                    let shift = self.quad.nodes()[node_idx].shift;
                    for i in 0..n {
                        let g = self.geom(*o, node_idx, i)?;
                        let m = (i + shift) % n;
                        for (slot, (h, sh)) in fields.iter().zip(&shifted).enumerate() {
                            locals[slot] = self.local(h, sh, *o, m, i);
                        }
                        acc.add(f(&g, &locals));
                    }
                }
                Ok(acc)
            })
            .collect();
        let mut total = CompensatedSum::default();
        for p in partial {
            total.merge(p?);
        }
        Ok(total.value())
    }

    /// Covector ℓ with ℓ(h) = Σ over pairs of the local linear functional produced by `f`.
    pub fn covector<F>(&self, f: F) -> Result<Covector>
    where
        F: Fn(&PairGeom, &mut LocalCovector) + Sync,
    {
        let n = self.curve.n_nodes();
        let dim = self.curve.dim();
        let n_offsets = self.quad.offsets().len();
        struct Partial {
            o: usize,
            cx: Field,
            ct: Field,
            cy: Field,
            cu: Field,
        }
        let partial: Vec<Result<Partial>> = self
            .tasks
            .par_iter()
            .map(|(o, range)| {
                let members = &self.quad.nodes_by_offset()[*o];
                let mut p = Partial {
                    o: *o,
                    cx: Field::zeros(n, dim),
                    ct: Field::zeros(n, dim),
                    cy: Field::zeros(n, dim),
                    cu: Field::zeros(n, dim),
                };
                for &node_idx in &members[range.clone()] {
                    let shift = self.quad.nodes()[node_idx].shift;
                    for i in 0..n {
                        let g = self.geom(*o, node_idx, i)?;
                        let m = (i + shift) % n;
                        let mut lc = LocalCovector::default();
                        f(&g, &mut lc);
                        for a in 0..dim {
                            let cx = p.cx.get(i, a);
                            p.cx.set(i, a, cx + lc.x[a]);
                            let ct = p.ct.get(i, a);
                            p.ct.set(i, a, ct + lc.t[a]);
                            let cy = p.cy.get(m, a);
                            p.cy.set(m, a, cy + lc.y[a]);
                            let cu = p.cu.get(m, a);
                            p.cu.set(m, a, cu + lc.u[a]);
                        }
                    }
                }
                Ok(p)
            })
            .collect();
        let mut cx = Field::zeros(n, dim);
        let mut ct = Field::zeros(n, dim);
        let mut cy: Vec<Field> = vec![Field::zeros(n, dim); n_offsets];
        let mut cu: Vec<Field> = vec![Field::zeros(n, dim); n_offsets];
        for p in partial {
            let p = p?;
            cx.axpy(1.0, &p.cx);
            ct.axpy(1.0, &p.ct);
            cy[p.o].axpy(1.0, &p.cy);
            cu[p.o].axpy(1.0, &p.cu);
        }
        let grid = self.curve.grid();
        let mut out = cx;
        out.axpy(1.0, &ct.map_spectral_transpose(grid, Multiplier::Derivative));
        for (o, &tau) in self.quad.offsets().iter().enumerate() {
            out.axpy(1.0, &cy[o].map_spectral_transpose(grid, Multiplier::Shift(tau)));
            out.axpy(
                1.0,
                &cu[o].map_spectral_transpose(grid, Multiplier::ShiftedDerivative(tau)),
            );
        }
        Ok(Covector(out))
    }

    /// Dense nN×nN matrix M with Σ_pairs local(h)ᵀ L local(k) = hᵀ M k, where `f` fills L.
    pub fn matrix<F>(&self, f: F) -> Result<DMatrix<f64>>
    where
        F: Fn(&PairGeom, &mut LocalMatrix),
    {
        let n = self.curve.n_nodes();
        let dim = self.curve.dim();
        let grid = self.curve.grid();
        let nn = dim * dim;
        let mut out = DMatrix::<f64>::zeros(n * dim, n * dim);
        let mut local = LocalMatrix::new(dim);
        // x-side/x-side couplings are diagonal in i and independent of the offset.
        let mut xx = vec![vec![0.0; n]; 4 * nn];
        for (o, members) in self.quad.nodes_by_offset().iter().enumerate() {
            let tau = self.quad.offsets()[o];
            let y_ops = [Multiplier::Shift(tau), Multiplier::ShiftedDerivative(tau)];
            let y_dense = [grid.dense(y_ops[0]), grid.dense(y_ops[1])];
            let mut yy = vec![vec![0.0; n]; 4 * nn];
            let mut xy: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n, n); 4 * nn];
            let mut yx: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n, n); 4 * nn];
            for &node_idx in members {
                let shift = self.quad.nodes()[node_idx].shift;
                for i in 0..n {
                    let g = self.geom(o, node_idx, i)?;
                    let m = (i + shift) % n;
                    local.clear();
                    f(&g, &mut local);
                    for sa in 0..2 {
                        for sb in 0..2 {
                            let pair = sa * 2 + sb;
                            for a in 0..dim {
                                for b in 0..dim {
                                    let idx = pair * nn + a * dim + b;
                                    xx[idx][i] += local.get(sa, a, sb, b);
                                    yy[idx][m] += local.get(sa + 2, a, sb + 2, b);
                                    xy[idx][(i, m)] += local.get(sa, a, sb + 2, b);
                                    yx[idx][(m, i)] += local.get(sa + 2, a, sb, b);
                                }
                            }
                        }
                    }
                }
            }
            for a in 0..dim {
                for b in 0..dim {
                    let at = |sa: usize, sb: usize| (sa * 2 + sb) * nn + a * dim + b;
                    let mut block = DMatrix::<f64>::zeros(n, n);
                    // Σ_sb X_{sa,sb}·Y_sb, then the x-side operator on the left.
                    for sa in 0..2 {
                        let mut inner = DMatrix::<f64>::zeros(n, n);
                        for (sb, op) in y_ops.iter().enumerate() {
                            inner += grid.right_multiply(&xy[at(sa, sb)], *op);
                        }
                        if sa == 0 {
                            block += inner;
                        } else {
                            block += grid.apply_columns(&inner, Multiplier::Derivative, true);
                        }
                    }
                    // Σ_sa Y_saᵀ·X_{sa,sb}, then the x-side operator on the right.
                    for sb in 0..2 {
                        let mut inner = DMatrix::<f64>::zeros(n, n);
                        for (sa, op) in y_ops.iter().enumerate() {
                            inner += grid.apply_columns(&yx[at(sa, sb)], *op, true);
                        }
                        if sb == 0 {
                            block += inner;
                        } else {
                            block += grid.right_multiply(&inner, Multiplier::Derivative);
                        }
                    }
                    // Σ_sa Y_saᵀ·(Σ_sb diag·Y_sb).
                    for sa in 0..2 {
                        let mut inner = DMatrix::<f64>::zeros(n, n);
                        for (sb, dense) in y_dense.iter().enumerate() {
                            let diag = &yy[at(sa, sb)];
                            for c in 0..n {
                                for r in 0..n {
                                    inner[(r, c)] += diag[r] * dense[(r, c)];
                                }
                            }
                        }
                        block += grid.apply_columns(&inner, y_ops[sa], true);
                    }
                    let mut view = out.view_mut((a * n, b * n), (n, n));
                    view += block;
                }
            }
        }
        for a in 0..dim {
            for b in 0..dim {
                let at = |sa: usize, sb: usize| (sa * 2 + sb) * nn + a * dim + b;
                let mut block = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_vec(xx[at(0, 0)].clone()));
                let mut right = DMatrix::<f64>::zeros(n, n);
                // diag(x,t)·D and Dᵀ·diag(t,x) and Dᵀ·diag(t,t)·D.
                let xt = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_vec(xx[at(0, 1)].clone()));
                block += grid.right_multiply(&xt, Multiplier::Derivative);
                let tx = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_vec(xx[at(1, 0)].clone()));
                right += tx;
                let tt = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_vec(xx[at(1, 1)].clone()));
                right += grid.right_multiply(&tt, Multiplier::Derivative);
                block += grid.apply_columns(&right, Multiplier::Derivative, true);
                let mut view = out.view_mut((a * n, b * n), (n, n));
                view += block;
            }
        }
        Ok(out)
    }
}
