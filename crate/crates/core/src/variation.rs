//! First and second variations of the tangent-point energy and of length.
//!
//! Notation per (x, y = x + w) pair: d = Δγ, t = γ′(x), u = γ′(y), ρ = |d|,
//! L_γh = Δh − h′(x)⟨T, d⟩/|t| and base = ω̃ |t||u| ρ^{−p}. The forms are
//!
//! * B¹(h, k) = Σ base ⟨L_γh, L_γk⟩
//! * B²(h, k) = Σ base |L_γγ|² ⟨Δh, Δk⟩ / ρ²
//! * B³(h, k) = Σ base |L_γγ|² (⟨h′, k′⟩(x)/|t|² + ⟨h′, k′⟩(y)/|u|²)
//!
//! so that TP = B¹(γ, γ) and DTP(γ)h = 2B¹(γ, h) − pB²(γ, h) + B³(γ, h).
//! The derivatives (DB^i(γ)k)(γ, h) differentiate only the dependence on the
//! base curve, with the first slot frozen at γ.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curve::DiscreteCurve;
use crate::energy::TangentPointEnergy;
use crate::error::{Error, Result};
use crate::field::{Covector, DisplacementField, Field};
use crate::pairs::{Local, LocalMatrix, LocalVector, PairGeom, Slot};
use crate::sobolev::SobolevSpace;
use crate::spectral::Multiplier;

/// Nodewise tolerance for the tangency ⟨γ′, h′⟩ = 0.
pub const TANGENCY_TOL: f64 = 1e-10;

/// Tolerance on |γ′| − 1 for unit-speed preconditions.
pub const UNIT_SPEED_TOL: f64 = 1e-8;

#[inline]
fn base(g: &PairGeom, p: f64) -> f64 {
    g.weight * g.nt * g.nu * g.rho.powf(-p)
}

/// ⟨T, k′(x)⟩/|t| + ⟨U, k′(y)⟩/|u| − p⟨d, Δk⟩/ρ²: the relative first variation of |t||u|ρ^{−p}.
#[inline]
fn kappa(g: &PairGeom, k: &Local, p: f64) -> f64 {
    let dk = g.delta(k);
    g.dot(&g.t, &k.t) / (g.nt * g.nt) + g.dot(&g.u, &k.u) / (g.nu * g.nu) - p * g.dot(&g.d, &dk) / g.rho2
}

/// First variation of ⟨t, d⟩/|t|² in direction k.
#[inline]
fn e_var(g: &PairGeom, k: &Local) -> f64 {
    let dk = g.delta(k);
    let a2 = g.nt * g.nt;
    (g.dot(&k.t, &g.d) + g.dot(&g.t, &dk)) / a2 - 2.0 * g.e * g.dot(&g.t, &k.t) / (a2 * a2)
}

/// ⟨t, h′(x)⟩/|t|² + ⟨u, h′(y)⟩/|u|².
#[inline]
fn tangential(g: &PairGeom, h: &Local) -> f64 {
    g.dot(&g.t, &h.t) / (g.nt * g.nt) + g.dot(&g.u, &h.u) / (g.nu * g.nu)
}

fn check_field(curve: &DiscreteCurve, h: &DisplacementField) -> Result<()> {
    if h.n_nodes() != curve.n_nodes() || h.dim() != curve.dim() {
        return Err(Error::dimension(format!(
            "field ({} nodes, dim {}) does not match curve ({} nodes, dim {})",
            h.n_nodes(),
            h.dim(),
            curve.n_nodes(),
            curve.dim()
        )));
    }
    Ok(())
}

pub fn b1(energy: &TangentPointEnergy, curve: &DiscreteCurve, h: &DisplacementField, k: &DisplacementField) -> Result<f64> {
    let p = energy.p();
    energy.engine(curve)?.sum(&[h, k], |g, l| {
        base(g, p) * g.dot(&g.chord_defect(&l[0]), &g.chord_defect(&l[1]))
    })
}

pub fn b2(energy: &TangentPointEnergy, curve: &DiscreteCurve, h: &DisplacementField, k: &DisplacementField) -> Result<f64> {
    let p = energy.p();
    energy.engine(curve)?.sum(&[h, k], |g, l| {
        base(g, p) * g.k2 / g.rho2 * g.dot(&g.delta(&l[0]), &g.delta(&l[1]))
    })
}

pub fn b3(energy: &TangentPointEnergy, curve: &DiscreteCurve, h: &DisplacementField, k: &DisplacementField) -> Result<f64> {
    let p = energy.p();
    energy.engine(curve)?.sum(&[h, k], |g, l| {
        let (h, k) = (&l[0], &l[1]);
        base(g, p)
            * g.k2
            * (g.dot(&h.t, &k.t) / (g.nt * g.nt) + g.dot(&h.u, &k.u) / (g.nu * g.nu))
    })
}

/// DTP(γ)h = 2B¹(γ, h) − pB²(γ, h) + B³(γ, h), evaluated pairwise.
pub fn d_tp(energy: &TangentPointEnergy, curve: &DiscreteCurve, h: &DisplacementField) -> Result<f64> {
    let p = energy.p();
    energy.engine(curve)?.sum(&[h], |g, l| {
        let h = &l[0];
        let b = base(g, p);
        let lh = g.chord_defect(h);
        let dh = g.delta(h);
        b * (2.0 * g.dot(&g.lg, &lh) - p * g.k2 * g.dot(&g.d, &dh) / g.rho2 + g.k2 * tangential(g, h))
    })
}

/// (DB¹(γ)k)(γ, h).
pub fn db1(energy: &TangentPointEnergy, curve: &DiscreteCurve, k: &DisplacementField, h: &DisplacementField) -> Result<f64> {
    let p = energy.p();
    energy.engine(curve)?.sum(&[k, h], |g, l| {
        let (k, h) = (&l[0], &l[1]);
        let lh = g.chord_defect(h);
        let t_lh = g.dot(&g.t, &lh) + g.dot(&g.lg, &h.t);
        base(g, p) * (kappa(g, k, p) * g.dot(&g.lg, &lh) - e_var(g, k) * t_lh)
    })
}

/// How the ⟨Φ^s γ, Φ^s k⟩ term of DB² is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Db2Evaluation {
    #[default]
    Direct,
    /// As ⟨Φ^{s+ε}γ, Φ^{s−ε}k⟩ with ε = (2 − s)/2.
    Split,
}

fn db2_pair(g: &PairGeom, k: &Local, h: &Local, p: f64, s: f64, mode: Db2Evaluation, full: bool) -> f64 {
    let dh = g.delta(h);
    let dk = g.delta(k);
    let dd_h = g.dot(&g.d, &dh);
    let chord = -(p + 2.0) * g.k2 * g.dot(&g.d, &dk) / (g.rho2 * g.rho2);
    let lk = g.chord_defect(k);
    let prefactor = g.weight * g.nt * g.nu / g.rho;
    let cross = match mode {
        Db2Evaluation::Direct => 2.0 * g.dot(&g.lg, &lk) * g.rho.powf(-2.0 * s) / g.rho2,
        Db2Evaluation::Split => {
            let eps = (2.0 - s) / 2.0;
            let mut acc = 0.0;
            for a in 0..g.dim {
                acc += (g.lg[a] * g.rho.powf(-(s + eps))) * (lk[a] * g.rho.powf(-(s - eps)));
            }
            2.0 * acc / g.rho2
        }
    };
    let mut inner = chord * g.rho.powf(-2.0 * s) + cross;
    if full {
        let tk = g.dot(&g.t, &k.t) / (g.nt * g.nt) + g.dot(&g.u, &k.u) / (g.nu * g.nu);
        inner += g.k2 * tk * g.rho.powf(-2.0 * s) / g.rho2;
    }
    prefactor * dd_h * inner
}

/// Checks ⟨γ′(x_i), h′(x_i)⟩ = 0 at every node.
pub fn check_tangent(curve: &DiscreteCurve, h: &DisplacementField) -> Result<()> {
    check_field(curve, h)?;
    let scale = h.deriv().max_abs().max(1.0) * curve.speed().iter().cloned().fold(1.0, f64::max);
    for i in 0..curve.n_nodes() {
        let v: f64 = (0..curve.dim())
            .map(|a| curve.deriv().get(i, a) * h.deriv().get(i, a))
            .sum();
        if v.abs() > TANGENCY_TOL * scale {
            return Err(Error::precondition(format!(
                "field is not tangent: ⟨γ′, h′⟩ = {v:.3e} at node {i}"
            )));
        }
    }
    Ok(())
}

/// Checks |γ′| ≡ 1.
pub fn check_unit_speed(curve: &DiscreteCurve) -> Result<()> {
    let dev = curve.speed_deviation();
    if dev > UNIT_SPEED_TOL {
        return Err(Error::precondition(format!(
            "curve is not parametrized by arclength: max ||γ′| − 1| = {dev:.3e}"
        )));
    }
    Ok(())
}

/// (DB²(γ)k)(γ, h) for tangent k, where the term with ⟨T, k′⟩ vanishes and is dropped.
pub fn db2(
    energy: &TangentPointEnergy,
    curve: &DiscreteCurve,
    k: &DisplacementField,
    h: &DisplacementField,
    mode: Db2Evaluation,
) -> Result<f64> {
    check_tangent(curve, k)?;
    let p = energy.p();
    let s = energy.order().s();
    energy.engine(curve)?.sum(&[k, h], |g, l| db2_pair(g, &l[0], &l[1], p, s, mode, false))
}

/// (DB²(γ)k)(γ, h) for arbitrary k, including the tangential term.
pub fn db2_full(energy: &TangentPointEnergy, curve: &DiscreteCurve, k: &DisplacementField, h: &DisplacementField) -> Result<f64> {
    let p = energy.p();
    let s = energy.order().s();
    energy
        .engine(curve)?
        .sum(&[k, h], |g, l| db2_pair(g, &l[0], &l[1], p, s, Db2Evaluation::Direct, true))
}

/// (DB³(γ)k)(γ, h) for arbitrary fields.
pub fn db3(energy: &TangentPointEnergy, curve: &DiscreteCurve, k: &DisplacementField, h: &DisplacementField) -> Result<f64> {
    let p = energy.p();
    energy.engine(curve)?.sum(&[k, h], |g, l| {
        let (k, h) = (&l[0], &l[1]);
        let b = base(g, p);
        let lk = g.chord_defect(k);
        let dk_full = b * (2.0 * g.dot(&g.lg, &lk) + g.k2 * kappa(g, k, p));
        let a4 = (g.nt * g.nt).powi(2);
        let b4 = (g.nu * g.nu).powi(2);
        let second = -2.0 * g.dot(&g.t, &h.t) * g.dot(&g.t, &k.t) / a4 - 2.0 * g.dot(&g.u, &h.u) * g.dot(&g.u, &k.u) / b4;
        dk_full * tangential(g, h) + b * g.k2 * second
    })
}

/// DB³ on a unit-speed curve with tangent fields, where it vanishes identically.
///
/// Returns the assembled value; callers compare it against the scale of B³(γ, γ).
pub fn db3_vanishes(energy: &TangentPointEnergy, curve: &DiscreteCurve, k: &DisplacementField, h: &DisplacementField) -> Result<f64> {
    check_unit_speed(curve)?;
    check_tangent(curve, k)?;
    check_tangent(curve, h)?;
    db3(energy, curve, k, h)
}

/// D²TP(γ)(h, k) = 2B¹ − pB² + B³ + 2DB¹ − pDB² + DB³, valid for arbitrary fields.
pub fn d2_tp(energy: &TangentPointEnergy, curve: &DiscreteCurve, h: &DisplacementField, k: &DisplacementField) -> Result<f64> {
    let p = energy.p();
    Ok(2.0 * b1(energy, curve, h, k)? - p * b2(energy, curve, h, k)? + b3(energy, curve, h, k)?
        + 2.0 * db1(energy, curve, k, h)?
        - p * db2_full(energy, curve, k, h)?
        + db3(energy, curve, k, h)?)
}

/// 𝓛(γ) = (1/N) Σ |γ′(x_i)|.
pub fn length(curve: &DiscreteCurve) -> f64 {
    curve.length()
}

/// D𝓛(γ)h = (1/N) Σ ⟨T_i, h′_i⟩.
pub fn d_length(curve: &DiscreteCurve, h: &DisplacementField) -> Result<f64> {
    check_field(curve, h)?;
    let n = curve.n_nodes();
    let mut acc = 0.0;
    for i in 0..n {
        for a in 0..curve.dim() {
            acc += curve.deriv().get(i, a) / curve.speed()[i] * h.deriv().get(i, a);
        }
    }
    Ok(acc / n as f64)
}

/// D𝓛(γ) as a covector.
pub fn d_length_covector(curve: &DiscreteCurve) -> Covector {
    let n = curve.n_nodes();
    let mut tangent = curve.deriv().clone();
    for a in 0..curve.dim() {
        for (v, s) in tangent.component_mut(a).iter_mut().zip(curve.speed()) {
            *v /= s * n as f64;
        }
    }
    Covector(tangent.map_spectral_transpose(curve.grid(), Multiplier::Derivative))
}

/// D²𝓛(γ)(h, k) = (1/N) Σ (⟨h′, k′⟩ − ⟨T, h′⟩⟨T, k′⟩)/|γ′|.
pub fn d2_length(curve: &DiscreteCurve, h: &DisplacementField, k: &DisplacementField) -> Result<f64> {
    check_field(curve, h)?;
    check_field(curve, k)?;
    let n = curve.n_nodes();
    let dim = curve.dim();
    let mut acc = 0.0;
    for i in 0..n {
        let s = curve.speed()[i];
        let mut hk = 0.0;
        let mut th = 0.0;
        let mut tk = 0.0;
        for a in 0..dim {
            let t = curve.deriv().get(i, a) / s;
            hk += h.deriv().get(i, a) * k.deriv().get(i, a);
            th += t * h.deriv().get(i, a);
            tk += t * k.deriv().get(i, a);
        }
        acc += (hk - th * tk) / s;
    }
    Ok(acc / n as f64)
}

/// The tangential reduction (1/N) Σ ⟨h′_i, k′_i⟩.
pub fn d2_length_tangent(curve: &DiscreteCurve, h: &DisplacementField, k: &DisplacementField) -> Result<f64> {
    check_field(curve, h)?;
    check_field(curve, k)?;
    Ok(h.deriv().dot(k.deriv()) / curve.n_nodes() as f64)
}

/// G(h, k) = ⟨h, k⟩_{L²(|γ′|dx)} + ⟨D_γh, D_γk⟩_{L²(|γ′|dx)} + B¹ + B² + B³.
pub fn metric_g(energy: &TangentPointEnergy, curve: &DiscreteCurve, h: &DisplacementField, k: &DisplacementField) -> Result<f64> {
    check_field(curve, h)?;
    check_field(curve, k)?;
    let n = curve.n_nodes();
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for i in 0..n {
        let s = curve.speed()[i];
        for a in 0..curve.dim() {
            l2 += h.values().get(i, a) * k.values().get(i, a) * s;
            h1 += h.deriv().get(i, a) * k.deriv().get(i, a) / s;
        }
    }
    Ok((l2 + h1) / n as f64 + b1(energy, curve, h, k)? + b2(energy, curve, h, k)? + b3(energy, curve, h, k)?)
}

/// Multiplier λ of the length constraint with its least-squares residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangeMultiplier {
    pub lambda: f64,
    /// ‖DTP + λD𝓛‖ in the H^s dual norm.
    pub residual: f64,
    /// ‖DTP‖ in the H^s dual norm.
    pub differential_norm: f64,
}

/// λ = −⟨DTP, D𝓛⟩_*/⟨D𝓛, D𝓛⟩_* in the H^s dual pairing.
pub fn lagrange_multiplier(energy: &TangentPointEnergy, curve: &DiscreteCurve, space: &SobolevSpace) -> Result<LagrangeMultiplier> {
    let dtp = energy.differential(curve)?;
    let dl = d_length_covector(curve);
    let r_dl = space.riesz(&dl)?;
    let ll = dl.field().dot(&r_dl);
    if !(ll > 1e-30) {
        return Err(Error::LinearAlgebra {
            message: "length differential is numerically zero".into(),
            condition: f64::INFINITY,
        });
    }
    let lambda = -dtp.field().dot(&r_dl) / ll;
    let mut res = dtp.field().clone();
    res.axpy(lambda, dl.field());
    let residual = space.dual_norm_sq(&Covector(res))?.max(0.0).sqrt();
    let differential_norm = space.dual_norm_sq(&dtp)?.max(0.0).sqrt();
    Ok(LagrangeMultiplier {
        lambda,
        residual,
        differential_norm,
    })
}

/// Which bilinear form a [`FormMatrix`] represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FormKind {
    B1,
    B2,
    B3,
    /// (h, k) ↦ (DB¹(γ)k)(γ, h).
    DB1,
    /// Tangent-direction DB² (tangential term dropped).
    DB2,
    DB3,
    G,
    D2TP,
    D2L,
    HESS,
    /// D²TP − 2G restricted to the tangent space.
    Remainder,
}

impl FormKind {
    /// Kinds whose matrices must be symmetric.
    pub fn is_symmetric(self) -> bool {
        matches!(
            self,
            FormKind::B1
                | FormKind::B2
                | FormKind::B3
                | FormKind::G
                | FormKind::D2TP
                | FormKind::D2L
                | FormKind::HESS
                | FormKind::Remainder
        )
    }
}

/// Metadata written next to an exported matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormMatrixInfo {
    pub kind: FormKind,
    pub n_nodes: usize,
    pub ambient_dim: usize,
    pub s: f64,
    pub curve_hash: String,
    pub rows: usize,
    pub cols: usize,
    /// "nodal": entries indexed by (component · N + node); "tangent": by tangent basis vector.
    pub basis: String,
}

/// Dense matrix of a bilinear form, Q(h, k) = hᵀ M k.
#[derive(Clone, Debug)]
pub struct FormMatrix {
    pub info: FormMatrixInfo,
    pub entries: DMatrix<f64>,
}

impl FormMatrix {
    pub fn kind(&self) -> FormKind {
        self.info.kind
    }

    /// ‖M − Mᵀ‖_F / ‖M‖_F.
    pub fn asymmetry(&self) -> f64 {
        let norm = self.entries.norm();
        if norm == 0.0 {
            return 0.0;
        }
        (&self.entries - self.entries.transpose()).norm() / norm
    }

    /// hᵀ M k for nodal matrices.
    pub fn evaluate(&self, h: &Field, k: &Field) -> Result<f64> {
        if self.info.basis != "nodal" {
            return Err(Error::precondition("evaluate needs a matrix in the nodal basis"));
        }
        let hv = DVector::from_column_slice(h.as_slice());
        let kv = DVector::from_column_slice(k.as_slice());
        if hv.len() != self.entries.nrows() || kv.len() != self.entries.ncols() {
            return Err(Error::dimension("field size does not match the matrix"));
        }
        Ok(hv.dot(&(&self.entries * kv)))
    }

    /// Singular values in decreasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.entries.clone().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        sv
    }

    /// Writes the entries as CSV (one matrix row per line) and the metadata as JSON.
    pub fn export(&self, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
        for r in 0..self.entries.nrows() {
            let row: Vec<String> = (0..self.entries.ncols())
                .map(|c| format!("{:.17e}", self.entries[(r, c)]))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        serde_json::to_writer_pretty(std::fs::File::create(json_path)?, &self.info)?;
        Ok(())
    }
}

fn lvec() -> LocalVector {
    LocalVector::default()
}

/// L_γ-coefficients (x, t, y, u) of the isotropic chord-defect map.
fn chord_coeffs(g: &PairGeom) -> [f64; 4] {
    [-1.0, -g.c / g.nt, 1.0, 0.0]
}

const DELTA: [f64; 4] = [-1.0, 0.0, 1.0, 0.0];

/// h ↦ ⟨L_γγ, L_γh⟩.
fn lambda_vec(g: &PairGeom) -> LocalVector {
    let mut v = lvec();
    let f = g.c / g.nt;
    for a in 0..g.dim {
        v.x[a] = -g.lg[a];
        v.t[a] = -f * g.lg[a];
        v.y[a] = g.lg[a];
    }
    v
}

/// k ↦ κ(k).
fn kappa_vec(g: &PairGeom, p: f64) -> LocalVector {
    let mut v = lvec();
    for a in 0..g.dim {
        v.x[a] = p * g.d[a] / g.rho2;
        v.y[a] = -p * g.d[a] / g.rho2;
        v.t[a] = g.t[a] / (g.nt * g.nt);
        v.u[a] = g.u[a] / (g.nu * g.nu);
    }
    v
}

/// h ↦ ⟨t, L_γh⟩ + ⟨L_γγ, h′(x)⟩.
fn mu_vec(g: &PairGeom) -> LocalVector {
    let mut v = lvec();
    let f = g.c / g.nt;
    for a in 0..g.dim {
        v.x[a] = -g.t[a];
        v.y[a] = g.t[a];
        v.t[a] = -f * g.t[a] + g.lg[a];
    }
    v
}

/// k ↦ first variation of ⟨t, d⟩/|t|².
fn evar_vec(g: &PairGeom) -> LocalVector {
    let mut v = lvec();
    let a2 = g.nt * g.nt;
    for a in 0..g.dim {
        v.x[a] = -g.t[a] / a2;
        v.y[a] = g.t[a] / a2;
        v.t[a] = g.d[a] / a2 - 2.0 * g.e * g.t[a] / (a2 * a2);
    }
    v
}

/// h ↦ ⟨d, Δh⟩.
fn chord_vec(g: &PairGeom) -> LocalVector {
    let mut v = lvec();
    for a in 0..g.dim {
        v.x[a] = -g.d[a];
        v.y[a] = g.d[a];
    }
    v
}

/// h ↦ ⟨t, h′(x)⟩/|t|² + ⟨u, h′(y)⟩/|u|².
fn tangential_vec(g: &PairGeom) -> LocalVector {
    let mut v = lvec();
    for a in 0..g.dim {
        v.t[a] = g.t[a] / (g.nt * g.nt);
        v.u[a] = g.u[a] / (g.nu * g.nu);
    }
    v
}

fn local_b1(g: &PairGeom, p: f64, m: &mut LocalMatrix, coef: f64) {
    let c = chord_coeffs(g);
    m.add_iso_outer(&c, &c, coef * base(g, p));
}

fn local_b2(g: &PairGeom, p: f64, m: &mut LocalMatrix, coef: f64) {
    m.add_iso_outer(&DELTA, &DELTA, coef * base(g, p) * g.k2 / g.rho2);
}

fn local_b3(g: &PairGeom, p: f64, m: &mut LocalMatrix, coef: f64) {
    let b = coef * base(g, p) * g.k2;
    m.add_iso(Slot::T, Slot::T, b / (g.nt * g.nt));
    m.add_iso(Slot::U, Slot::U, b / (g.nu * g.nu));
}

fn local_db1(g: &PairGeom, p: f64, m: &mut LocalMatrix, coef: f64) {
    let b = coef * base(g, p);
    m.add_outer(&lambda_vec(g), &kappa_vec(g, p), b);
    m.add_outer(&mu_vec(g), &evar_vec(g), -b);
}

fn local_db2(g: &PairGeom, p: f64, m: &mut LocalMatrix, coef: f64, full: bool) {
    let b = coef * base(g, p);
    let dv = chord_vec(g);
    m.add_outer(&dv, &dv, -b * (p + 2.0) * g.k2 / (g.rho2 * g.rho2));
    m.add_outer(&dv, &lambda_vec(g), 2.0 * b / g.rho2);
    if full {
        m.add_outer(&dv, &tangential_vec(g), b * g.k2 / g.rho2);
    }
}

fn local_db3(g: &PairGeom, p: f64, m: &mut LocalMatrix, coef: f64) {
    let b = coef * base(g, p);
    let tv = tangential_vec(g);
    m.add_outer(&tv, &lambda_vec(g), 2.0 * b);
    m.add_outer(&tv, &kappa_vec(g, p), b * g.k2);
    let mut tt = lvec();
    let mut uu = lvec();
    for a in 0..g.dim {
        tt.t[a] = g.t[a] / (g.nt * g.nt);
        uu.u[a] = g.u[a] / (g.nu * g.nu);
    }
    m.add_outer(&tt, &tt, -2.0 * b * g.k2);
    m.add_outer(&uu, &uu, -2.0 * b * g.k2);
}

/// Per-node n×n blocks B_i and the matrix Σ over components of Dᵀ diag(B_i[a][b]) D
/// (or diag without derivatives).
fn nodal_block_matrix(curve: &DiscreteCurve, with_derivative: bool, block: impl Fn(usize, usize, usize) -> f64) -> DMatrix<f64> {
    let n = curve.n_nodes();
    let dim = curve.dim();
    let grid = curve.grid();
    let mut out = DMatrix::zeros(n * dim, n * dim);
    for a in 0..dim {
        for b in 0..dim {
            let diag = DVector::from_fn(n, |i, _| block(i, a, b));
            if diag.iter().all(|v| *v == 0.0) {
                continue;
            }
            let d = DMatrix::from_diagonal(&diag);
            let m = if with_derivative {
                let right = grid.right_multiply(&d, Multiplier::Derivative);
                grid.apply_columns(&right, Multiplier::Derivative, true)
            } else {
                d
            };
            let mut view = out.view_mut((a * n, b * n), (n, n));
            view += m;
        }
    }
    out
}

fn info(energy: &TangentPointEnergy, curve: &DiscreteCurve, kind: FormKind, rows: usize, cols: usize, basis: &str) -> FormMatrixInfo {
    FormMatrixInfo {
        kind,
        n_nodes: curve.n_nodes(),
        ambient_dim: curve.dim(),
        s: energy.order().s(),
        curve_hash: curve.content_hash(),
        rows,
        cols,
        basis: basis.to_string(),
    }
}

/// Assembles the nodal matrix of a form. `HESS` and `Remainder` live on the tangent
/// space; see [`crate::constraint::constrained_hessian`] and
/// [`crate::constraint::compact_remainder`].
pub fn form_matrix(energy: &TangentPointEnergy, curve: &DiscreteCurve, kind: FormKind) -> Result<FormMatrix> {
    let p = energy.p();
    let n = curve.n_nodes();
    let dim = curve.dim();
    let engine = energy.engine(curve)?;
    let entries = match kind {
        FormKind::B1 => engine.matrix(|g, m| local_b1(g, p, m, 1.0))?,
        FormKind::B2 => engine.matrix(|g, m| local_b2(g, p, m, 1.0))?,
        FormKind::B3 => engine.matrix(|g, m| local_b3(g, p, m, 1.0))?,
        FormKind::DB1 => engine.matrix(|g, m| local_db1(g, p, m, 1.0))?,
        FormKind::DB2 => engine.matrix(|g, m| local_db2(g, p, m, 1.0, false))?,
        FormKind::DB3 => engine.matrix(|g, m| local_db3(g, p, m, 1.0))?,
        FormKind::D2TP => engine.matrix(|g, m| {
            local_b1(g, p, m, 2.0);
            local_b2(g, p, m, -p);
            local_b3(g, p, m, 1.0);
            local_db1(g, p, m, 2.0);
            local_db2(g, p, m, -p, true);
            local_db3(g, p, m, 1.0);
        })?,
        FormKind::G => {
            let forms = engine.matrix(|g, m| {
                local_b1(g, p, m, 1.0);
                local_b2(g, p, m, 1.0);
                local_b3(g, p, m, 1.0);
            })?;
            let speed = curve.speed();
            let l2 = nodal_block_matrix(curve, false, |i, a, b| if a == b { speed[i] / n as f64 } else { 0.0 });
            let h1 = nodal_block_matrix(curve, true, |i, a, b| if a == b { 1.0 / (speed[i] * n as f64) } else { 0.0 });
            forms + l2 + h1
        }
        FormKind::D2L => d2_length_matrix(curve),
        FormKind::HESS | FormKind::Remainder => {
            return Err(Error::precondition(
                "tangent-space matrices are assembled by the constraint module",
            ))
        }
    };
    Ok(FormMatrix {
        info: info(energy, curve, kind, n * dim, n * dim, "nodal"),
        entries,
    })
}

fn d2_length_matrix(curve: &DiscreteCurve) -> DMatrix<f64> {
    let n = curve.n_nodes() as f64;
    let speed = curve.speed();
    let deriv = curve.deriv();
    nodal_block_matrix(curve, true, |i, a, b| {
        let s = speed[i];
        let ta = deriv.get(i, a) / s;
        let tb = deriv.get(i, b) / s;
        let id = if a == b { 1.0 } else { 0.0 };
        (id - ta * tb) / (s * n)
    })
}

pub(crate) fn tangent_info(
    energy: &TangentPointEnergy,
    curve: &DiscreteCurve,
    kind: FormKind,
    size: usize,
) -> FormMatrixInfo {
    info(energy, curve, kind, size, size, "tangent")
}
