//! Discrete tangent spaces of the arclength manifold and constrained gradients.
//!
//! A displacement h is tangent at γ when ⟨γ′(x_i), h′(x_i)⟩ = 0 at every node
//! and h(0) = 0. These N + n linear conditions are collected in a dense
//! matrix C acting on nodal vectors (component-major, like [`Field`]).

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::curve::DiscreteCurve;
use crate::energy::TangentPointEnergy;
use crate::error::{Error, Result};
use crate::field::{Covector, DisplacementField, Field};
use crate::sobolev::SobolevSpace;
use crate::variation::{self, FormKind, FormMatrix};

/// How the saddle-point system of the constrained Riesz problem is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KktMethod {
    /// LU factorization of the full KKT matrix [A Cᵀ; C 0].
    #[default]
    DenseLu,
    /// Cholesky of the Schur complement C A⁻¹ Cᵀ, with A⁻¹ applied spectrally.
    Schur,
}

/// The collocated tangency rows and the base-point rows at a curve.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    n: usize,
    dim: usize,
    matrix: DMatrix<f64>,
}

impl ConstraintSystem {
    pub fn new(curve: &DiscreteCurve) -> Self {
        let n = curve.n_nodes();
        let dim = curve.dim();
        let deriv_op = curve.grid().dense(crate::spectral::Multiplier::Derivative);
        let mut matrix = DMatrix::zeros(n + dim, n * dim);
        for a in 0..dim {
            for i in 0..n {
                let ta = curve.deriv().get(i, a);
                for l in 0..n {
                    matrix[(i, a * n + l)] = ta * deriv_op[(i, l)];
                }
            }
            matrix[(n + a, a * n)] = 1.0;
        }
        ConstraintSystem { n, dim, matrix }
    }

    /// The (N + n) × nN constraint matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_rows(&self) -> usize {
        self.n + self.dim
    }

    /// C h.
    pub fn apply(&self, h: &Field) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(h.as_slice())
    }

    /// max |C h|, scaled by the size of h′ so that the test is scale-free.
    pub fn residual(&self, h: &Field) -> f64 {
        self.apply(h).amax()
    }

    /// A⁻¹Cᵀ, one Riesz solve per constraint row.
    fn inverse_gram_times_transpose(&self, space: &SobolevSpace) -> Result<DMatrix<f64>> {
        let rows = self.n_rows();
        let mut w = DMatrix::zeros(self.n * self.dim, rows);
        for r in 0..rows {
            let row: Vec<f64> = self.matrix.row(r).iter().copied().collect();
            let ell = Covector(Field::from_flat(self.n, self.dim, row)?);
            let g = space.riesz(&ell)?;
            w.column_mut(r).copy_from_slice(g.as_slice());
        }
        Ok(w)
    }

    fn schur(&self, space: &SobolevSpace) -> Result<(DMatrix<f64>, Cholesky<f64, nalgebra::Dyn>)> {
        let w = self.inverse_gram_times_transpose(space)?;
        let s = &self.matrix * &w;
        let s = 0.5 * (&s + s.transpose());
        let chol = Cholesky::new(s.clone()).ok_or_else(|| Error::LinearAlgebra {
            message: "constraint Schur complement is not positive definite".into(),
            condition: condition_estimate(&s),
        })?;
        Ok((w, chol))
    }

    /// H^s-orthogonal projection onto the tangent space.
    pub fn project_tangent(&self, space: &SobolevSpace, field: &Field) -> Result<Field> {
        let (w, chol) = self.schur(space)?;
        let rhs = self.apply(field);
        let mu = chol.solve(&rhs);
        let correction = &w * mu;
        let mut out = field.clone();
        for (o, c) in out.as_mut_slice().iter_mut().zip(correction.iter()) {
            *o -= c;
        }
        Ok(out)
    }

    /// Basis of the tangent space, orthonormal in H^s, ordered from smooth to oscillatory.
    pub fn tangent_basis(&self, space: &SobolevSpace) -> Result<DMatrix<f64>> {
        let size = self.n * self.dim;
        let c = &self.matrix;
        let cct = c * c.transpose();
        let chol = Cholesky::new(cct.clone()).ok_or_else(|| Error::LinearAlgebra {
            message: "constraint rows are linearly dependent".into(),
            condition: condition_estimate(&cct),
        })?;
        // Euclidean projector onto ker C; its unit eigenvalues span the kernel.
        let projector = DMatrix::identity(size, size) - c.transpose() * chol.solve(c);
        let eig = SymmetricEigen::new(0.5 * (&projector + projector.transpose()));
        let kernel: Vec<usize> = (0..size).filter(|&k| eig.eigenvalues[k] > 0.5).collect();
        let expected = size - self.n_rows();
        if kernel.len() != expected {
            return Err(Error::LinearAlgebra {
                message: format!(
                    "tangent space has dimension {} but {expected} was expected",
                    kernel.len()
                ),
                condition: condition_estimate(&cct),
            });
        }
        let z = DMatrix::from_fn(size, kernel.len(), |r, col| eig.eigenvectors[(r, kernel[col])]);
        let gram = space_gram(space, self.dim);
        let m = z.transpose() * &gram * &z;
        let eig_m = SymmetricEigen::new(0.5 * (&m + m.transpose()));
        let mut order: Vec<usize> = (0..kernel.len()).collect();
        order.sort_by(|&a, &b| {
            eig_m.eigenvalues[a]
                .partial_cmp(&eig_m.eigenvalues[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut basis = DMatrix::zeros(size, kernel.len());
        for (col, &k) in order.iter().enumerate() {
            let lam = eig_m.eigenvalues[k];
            if !(lam > 0.0) {
                return Err(Error::LinearAlgebra {
                    message: "H^s Gram matrix is not positive on the tangent space".into(),
                    condition: f64::INFINITY,
                });
            }
            let v = &z * eig_m.eigenvectors.column(k) / lam.sqrt();
            basis.column_mut(col).copy_from(&v);
        }
        Ok(basis)
    }
}

/// Full nN×nN H^s Gram matrix (block diagonal over components).
pub fn space_gram(space: &SobolevSpace, dim: usize) -> DMatrix<f64> {
    let n = space.n_nodes();
    let block = space.gram_block();
    let mut gram = DMatrix::zeros(n * dim, n * dim);
    for a in 0..dim {
        gram.view_mut((a * n, a * n), (n, n)).copy_from(&block);
    }
    gram
}

/// Ratio of extreme singular values, reported with linear-algebra failures.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// The constrained Riesz representative of DTP(γ).
#[derive(Clone, Debug)]
pub struct ConstrainedGradient {
    pub gradient: Field,
    /// ‖g‖_{H^s}.
    pub norm: f64,
    /// The differential it represents.
    pub differential: Covector,
}

/// Finds g in the tangent space with ⟨g, h⟩_{H^s} = DTP(γ)h for all tangent h.
pub fn constrained_gradient(
    energy: &TangentPointEnergy,
    curve: &DiscreteCurve,
    space: &SobolevSpace,
    method: KktMethod,
) -> Result<ConstrainedGradient> {
    let differential = energy.differential(curve)?;
    let system = ConstraintSystem::new(curve);
    let gradient = constrained_riesz(&system, space, &differential, method)?;
    let norm = space.norm_sq(&gradient)?.max(0.0).sqrt();
    Ok(ConstrainedGradient {
        gradient,
        norm,
        differential,
    })
}

/// Solves the KKT system [A Cᵀ; C 0][g; μ] = [ℓ; 0].
pub fn constrained_riesz(
    system: &ConstraintSystem,
    space: &SobolevSpace,
    ell: &Covector,
    method: KktMethod,
) -> Result<Field> {
    let n = system.n;
    let dim = system.dim;
    let size = n * dim;
    match method {
        KktMethod::Schur => {
            let (w, chol) = system.schur(space)?;
            let g0 = space.riesz(ell)?;
            let rhs = system.apply(&g0);
            let mu = chol.solve(&rhs);
            let correction = &w * mu;
            let mut out = g0;
            for (o, c) in out.as_mut_slice().iter_mut().zip(correction.iter()) {
                *o -= c;
            }
            Ok(out)
        }
        KktMethod::DenseLu => {
            let rows = system.n_rows();
            let mut kkt = DMatrix::zeros(size + rows, size + rows);
            kkt.view_mut((0, 0), (size, size)).copy_from(&space_gram(space, dim));
            kkt.view_mut((size, 0), (rows, size)).copy_from(system.matrix());
            kkt.view_mut((0, size), (size, rows)).copy_from(&system.matrix().transpose());
            let mut rhs = DVector::zeros(size + rows);
            rhs.rows_mut(0, size).copy_from_slice(ell.field().as_slice());
            let lu = kkt.clone().lu();
            let sol = lu.solve(&rhs).ok_or_else(|| Error::LinearAlgebra {
                message: "KKT matrix is singular".into(),
                condition: condition_estimate(&kkt),
            })?;
            if !sol.iter().all(|v| v.is_finite()) {
                return Err(Error::LinearAlgebra {
                    message: "KKT solve produced non-finite values".into(),
                    condition: condition_estimate(&kkt),
                });
            }
            Field::from_flat(n, dim, sol.rows(0, size).iter().copied().collect())
        }
    }
}

/// Hess = (D²TP + λD²𝓛) restricted to an H^s-orthonormal tangent basis.
pub fn constrained_hessian(energy: &TangentPointEnergy, curve: &DiscreteCurve, space: &SobolevSpace) -> Result<(FormMatrix, DMatrix<f64>)> {
    let system = ConstraintSystem::new(curve);
    let basis = system.tangent_basis(space)?;
    let lambda = variation::lagrange_multiplier(energy, curve, space)?.lambda;
    let d2tp = variation::form_matrix(energy, curve, FormKind::D2TP)?;
    let d2l = variation::form_matrix(energy, curve, FormKind::D2L)?;
    let full = symmetric_part(d2tp.entries + lambda * d2l.entries);
    let entries = basis.transpose() * full * &basis;
    let size = entries.nrows();
    Ok((
        FormMatrix {
            info: variation::tangent_info(energy, curve, FormKind::HESS, size),
            entries,
        },
        basis,
    ))
}

/// K̃ = D²TP − 2G restricted to an H^s-orthonormal tangent basis.
///
/// D²TP = 2B¹ + (lower-order terms) and G = B¹ + (lower-order terms), so the
/// principal parts cancel only with the factor 2; D²TP − G retains B¹ and has
/// singular values that do not decay.
pub fn compact_remainder(energy: &TangentPointEnergy, curve: &DiscreteCurve, space: &SobolevSpace) -> Result<FormMatrix> {
    let system = ConstraintSystem::new(curve);
    let basis = system.tangent_basis(space)?;
    let d2tp = variation::form_matrix(energy, curve, FormKind::D2TP)?;
    let g = variation::form_matrix(energy, curve, FormKind::G)?;
    let entries = basis.transpose() * symmetric_part(d2tp.entries - 2.0 * g.entries) * &basis;
    let size = entries.nrows();
    Ok(FormMatrix {
        info: variation::tangent_info(energy, curve, FormKind::Remainder, size),
        entries,
    })
}

/// (M + Mᵀ)/2. Nodal form matrices carry rounding-level asymmetry that the
/// projection onto smooth tangent fields amplifies by ‖M‖/‖BᵀMB‖.
fn symmetric_part(m: DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (&m + m.transpose())
}

/// A displacement field from column `col` of a nodal basis matrix.
pub fn basis_field(basis: &DMatrix<f64>, col: usize, n_nodes: usize, dim: usize) -> Result<DisplacementField> {
    let data: Vec<f64> = basis.column(col).iter().copied().collect();
    DisplacementField::new(Field::from_flat(n_nodes, dim, data)?)
}
