//! Per-node vector data on the periodic parameter grid.

use crate::error::{Error, Result};
use crate::spectral::{Multiplier, SpectralGrid};

/// Hot loops keep per-pair vectors on the stack; this bounds the ambient dimension.
pub const MAX_DIM: usize = 8;

/// N vectors in ℝⁿ sampled at x_i = i/N, stored component-major
/// (`data[a * N + i]` is component `a` of node `i`).
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    n_nodes: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(n_nodes: usize, dim: usize) -> Self {
        Field {
            n_nodes,
            dim,
            data: vec![0.0; n_nodes * dim],
        }
    }

    /// Builds a field from a closure returning the point at parameter `x_i = i/N`.
    pub fn from_fn(n_nodes: usize, dim: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Self {
        let mut field = Field::zeros(n_nodes, dim);
        for i in 0..n_nodes {
            let p = f(i as f64 / n_nodes as f64);
            assert_eq!(p.len(), dim, "closure returned a point of the wrong dimension");
            for (a, v) in p.into_iter().enumerate() {
                field.data[a * n_nodes + i] = v;
            }
        }
        field
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let n_nodes = points.len();
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::dimension("empty point list"));
        }
        let mut field = Field::zeros(n_nodes, dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::dimension(format!(
                    "point {i} has {} coordinates, expected {dim}",
                    p.len()
                )));
            }
            for (a, &v) in p.iter().enumerate() {
                field.data[a * n_nodes + i] = v;
            }
        }
        Ok(field)
    }

    pub fn from_components(components: Vec<Vec<f64>>) -> Result<Self> {
        let dim = components.len();
        let n_nodes = components.first().map(Vec::len).unwrap_or(0);
        if components.iter().any(|c| c.len() != n_nodes) {
            return Err(Error::dimension("components have different lengths"));
        }
        Ok(Field {
            n_nodes,
            dim,
            data: components.concat(),
        })
    }

    /// Wraps a flat component-major vector.
    pub fn from_flat(n_nodes: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_nodes * dim {
            return Err(Error::dimension(format!(
                "flat vector of length {} cannot hold {n_nodes} nodes in dimension {dim}",
                data.len()
            )));
        }
        Ok(Field { n_nodes, dim, data })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn component(&self, a: usize) -> &[f64] {
        &self.data[a * self.n_nodes..(a + 1) * self.n_nodes]
    }

    pub fn component_mut(&mut self, a: usize) -> &mut [f64] {
        &mut self.data[a * self.n_nodes..(a + 1) * self.n_nodes]
    }

    #[inline]
    pub fn get(&self, i: usize, a: usize) -> f64 {
        self.data[a * self.n_nodes + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, a: usize, v: f64) {
        self.data[a * self.n_nodes + i] = v;
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        (0..self.dim).map(|a| self.get(i, a)).collect()
    }

    #[inline]
    pub(crate) fn load(&self, i: usize, out: &mut [f64; MAX_DIM]) {
        for a in 0..self.dim {
            out[a] = self.data[a * self.n_nodes + i];
        }
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.n_nodes == other.n_nodes && self.dim == other.dim
    }

    pub(crate) fn check_shape(&self, other: &Field) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dimension(format!(
                "fields on different grids: ({} nodes, dim {}) vs ({} nodes, dim {})",
                self.n_nodes, self.dim, other.n_nodes, other.dim
            )))
        }
    }

    /// Σ_i ⟨self_i, other_i⟩.
    pub fn dot(&self, other: &Field) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Field {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, factor: f64, other: &Field) -> Field {
        let mut out = self.clone();
        out.axpy(factor, other);
        out
    }

    pub fn axpy(&mut self, factor: f64, other: &Field) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.add_scaled(-1.0, other)
    }

    /// Applies a spectral operator to every component.
    pub fn map_spectral(&self, grid: &SpectralGrid, op: Multiplier) -> Field {
        let mut out = Field::zeros(self.n_nodes, self.dim);
        for a in 0..self.dim {
            grid.apply_into(self.component(a), op, out.component_mut(a));
        }
        out
    }

    /// Applies the transpose of a spectral operator to every component.
    pub fn map_spectral_transpose(&self, grid: &SpectralGrid, op: Multiplier) -> Field {
        let mut out = Field::zeros(self.n_nodes, self.dim);
        for a in 0..self.dim {
            grid.apply_transpose_into(self.component(a), op, out.component_mut(a));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A displacement (tangent vector) together with its parameter derivative h′.
#[derive(Clone, Debug)]
pub struct DisplacementField {
    values: Field,
    deriv: Field,
}

impl DisplacementField {
    /// Samples a field and differentiates it spectrally.
    pub fn new(values: Field) -> Result<Self> {
        if !values.is_finite() {
            return Err(Error::parameter("displacement field has non-finite entries"));
        }
        let grid = SpectralGrid::new(values.n_nodes())?;
        let deriv = values.map_spectral(&grid, Multiplier::Derivative);
        Ok(DisplacementField { values, deriv })
    }

    pub(crate) fn from_parts(values: Field, deriv: Field) -> Self {
        debug_assert!(values.same_shape(&deriv));
        DisplacementField { values, deriv }
    }

    pub fn zeros(n_nodes: usize, dim: usize) -> Self {
        DisplacementField {
            values: Field::zeros(n_nodes, dim),
            deriv: Field::zeros(n_nodes, dim),
        }
    }

    pub fn values(&self) -> &Field {
        &self.values
    }

    pub fn deriv(&self) -> &Field {
        &self.deriv
    }

    pub fn n_nodes(&self) -> usize {
        self.values.n_nodes()
    }

    pub fn dim(&self) -> usize {
        self.values.dim()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DisplacementField {
            values: self.values.scaled(factor),
            deriv: self.deriv.scaled(factor),
        }
    }

    pub fn add_scaled(&self, factor: f64, other: &DisplacementField) -> Self {
        DisplacementField {
            values: self.values.add_scaled(factor, &other.values),
            deriv: self.deriv.add_scaled(factor, &other.deriv),
        }
    }
}

/// A linear functional on displacements, ℓ(h) = Σ_i ⟨ℓ_i, h_i⟩ (plain nodal pairing).
#[derive(Clone, Debug)]
pub struct Covector(pub Field);

impl Covector {
    pub fn zeros(n_nodes: usize, dim: usize) -> Self {
        Covector(Field::zeros(n_nodes, dim))
    }

    pub fn apply(&self, h: &DisplacementField) -> f64 {
        self.0.dot(h.values())
    }

    pub fn field(&self) -> &Field {
        &self.0
    }
}
