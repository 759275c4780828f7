//! Uniform 1-D meshes with homogeneous Dirichlet boundary and nodal fields.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Interval `(0, L)` with `n` interior nodes at `x_i = i h`, `h = L / (n + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mesh1D {
    pub length: f64,
    pub interior_nodes: usize,
}

impl Mesh1D {
    pub fn new(length: f64, interior_nodes: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(LabError::InvalidParameter(format!(
                "mesh length must be positive, got {length}"
            )));
        }
        if interior_nodes < 2 {
            return Err(LabError::InvalidParameter(format!(
                "mesh needs at least 2 interior nodes, got {interior_nodes}"
            )));
        }
        Ok(Self {
            length,
            interior_nodes,
        })
    }

    pub fn n(&self) -> usize {
        self.interior_nodes
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.interior_nodes as f64 + 1.0)
    }

    /// Coordinate of interior node `i` (zero based).
    pub fn node(&self, i: usize) -> f64 {
        (i as f64 + 1.0) * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.interior_nodes).map(|i| self.node(i)).collect()
    }

    pub fn ensure_same(&self, other: &Mesh1D) -> Result<()> {
        if self.interior_nodes != other.interior_nodes || self.length != other.length {
            return Err(LabError::MeshMismatch {
                left: self.interior_nodes,
                right: other.interior_nodes,
            });
        }
        Ok(())
    }
}

/// Nodal values of a grid function; boundary values are implicitly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    mesh: Mesh1D,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(mesh: Mesh1D) -> Self {
        Self {
            mesh,
            values: vec![0.0; mesh.n()],
        }
    }

    pub fn from_values(mesh: Mesh1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n() {
            return Err(LabError::MeshMismatch {
                left: mesh.n(),
                right: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(LabError::InvalidParameter(format!(
                "field entries must be finite, found {bad}"
            )));
        }
        Ok(Self { mesh, values })
    }

    /// Sample `f` at the interior nodes.
    pub fn from_fn(mesh: Mesh1D, f: impl Fn(f64) -> f64) -> Self {
        let values = mesh.nodes().into_iter().map(f).collect();
        Self { mesh, values }
    }

    /// Wraps values without the finiteness scan; for solver internals.
    pub(crate) fn from_raw(mesh: Mesh1D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), mesh.n());
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scaled(&self, factor: f64) -> Field {
        Field::from_raw(self.mesh, self.values.iter().map(|v| v * factor).collect())
    }

    /// `a * self + b * other`
    pub fn lincomb(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.zip_with(other, |x, y| a * x + b * y)
    }

    /// Pointwise `self <= other + tol`.
    pub fn le_with_tol(&self, other: &Field, tol: f64) -> Result<bool> {
        self.mesh.ensure_same(&other.mesh)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .all(|(a, b)| *a <= *b + tol))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.mesh.ensure_same(&other.mesh)?;
        Ok(Field::from_raw(
            self.mesh,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        ))
    }
}
