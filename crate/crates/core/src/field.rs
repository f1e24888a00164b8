//! Scalar fields on a mesh: piecewise-linear functions stored as nodal
//! coefficients.

use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Semantic role of a field; purely informational.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    Parameter,
    Solution,
    Source,
    Eigenfunction,
}

#[derive(Debug, Clone)]
pub struct Field {
    mesh: Arc<Mesh>,
    values: DVector<f64>,
    role: FieldRole,
}

impl Field {
    /// Wraps nodal values, checking length and finiteness.
    pub fn new(mesh: Arc<Mesh>, values: DVector<f64>, role: FieldRole) -> Result<Self> {
        if values.len() != mesh.n_dof() {
            return Err(Error::Dimension(format!(
                "field has {} coefficients but mesh has {} DOFs",
                values.len(),
                mesh.n_dof()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "field coefficient {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Field { mesh, values, role })
    }

    pub fn zeros(mesh: Arc<Mesh>, role: FieldRole) -> Self {
        let n = mesh.n_dof();
        Field {
            mesh,
            values: DVector::zeros(n),
            role,
        }
    }

    pub fn constant(mesh: Arc<Mesh>, value: f64, role: FieldRole) -> Result<Self> {
        let n = mesh.n_dof();
        Field::new(mesh, DVector::from_element(n, value), role)
    }

    /// Evaluates `f(z1, z2)` at the embedded coordinates of every node.
    pub fn from_coords(mesh: Arc<Mesh>, role: FieldRole, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = DVector::from_fn(mesh.n_dof(), |i, _| {
            let (x, y) = mesh.dof_coords(i);
            f(x, y)
        });
        Field::new(mesh, values, role)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn with_role(mut self, role: FieldRole) -> Self {
        self.role = role;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    /// Sup norm of the nodal values.
    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Checks that `other` lives on a mesh with the same layout.
    pub fn same_mesh(&self, other: &Field) -> bool {
        meshes_compatible(&self.mesh, other.mesh())
    }

    /// Writes the field as CSV with columns `edge_id,t,z1,z2,value`, one row
    /// per node occurrence per edge (vertex rows repeat per incident edge).
    /// Floats are written in shortest round-trip form, so a reload is
    /// bit-exact.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "edge_id,t,z1,z2,value")?;
        let mesh = &self.mesh;
        let graph = mesh.graph();
        for e in 0..mesh.n_edges() {
            let id = &graph.edges()[e].id;
            for i in 0..=mesh.edge_elem_count(e) {
                let dof = mesh.edge_node_dof(e, i);
                let (z1, z2) = mesh.dof_coords(dof);
                writeln!(
                    w,
                    "{id},{t},{z1},{z2},{v}",
                    t = mesh.edge_node_t(e, i),
                    v = self.values[dof]
                )?;
            }
        }
        Ok(())
    }

    /// Reads a field written by [`Field::write_csv`] back onto `mesh`. The
    /// row layout must match the mesh exactly and duplicated vertex rows
    /// must agree.
    pub fn read_csv(mesh: Arc<Mesh>, r: impl Read, role: FieldRole) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io("<field csv>", e))?
            .ok_or_else(|| Error::Validation("empty field CSV".into()))?;
        if header.trim() != "edge_id,t,z1,z2,value" {
            return Err(Error::Validation(format!(
                "unexpected field CSV header '{header}'"
            )));
        }
        let graph = mesh.graph();
        let mut values = vec![f64::NAN; mesh.n_dof()];
        let mut row = 0usize;
        for line in lines {
            let line = line.map_err(|e| Error::io("<field csv>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 5 {
                return Err(Error::Validation(format!(
                    "field CSV row {row} has {} columns, expected 5",
                    parts.len()
                )));
            }
            let edge = graph
                .edge_index(parts[0])
                .ok_or_else(|| Error::Validation(format!("unknown edge id '{}'", parts[0])))?;
            let value: f64 = parts[4]
                .parse()
                .map_err(|_| Error::Validation(format!("bad value '{}' in row {row}", parts[4])))?;
            // Rows are interpreted in write order: node index within edge.
            let (expect_edge, node) = row_position(&mesh, row).ok_or_else(|| {
                Error::Validation(format!("field CSV has more rows than the mesh expects"))
            })?;
            if expect_edge != edge {
                return Err(Error::Validation(format!(
                    "field CSV row {row} is on edge '{}', expected edge '{}'",
                    parts[0],
                    graph.edges()[expect_edge].id
                )));
            }
            let dof = mesh.edge_node_dof(edge, node);
            if values[dof].is_nan() {
                values[dof] = value;
            } else if values[dof] != value {
                return Err(Error::Validation(format!(
                    "inconsistent duplicated value at shared DOF {dof} (row {row})"
                )));
            }
            row += 1;
        }
        let expected: usize = (0..mesh.n_edges()).map(|e| mesh.edge_elem_count(e) + 1).sum();
        if row != expected {
            return Err(Error::Validation(format!(
                "field CSV has {row} data rows, expected {expected}"
            )));
        }
        Field::new(mesh, DVector::from_vec(values), role)
    }
}

/// Maps a flat CSV row index to `(edge, node index)`.
fn row_position(mesh: &Mesh, row: usize) -> Option<(usize, usize)> {
    let mut r = row;
    for e in 0..mesh.n_edges() {
        let n = mesh.edge_elem_count(e) + 1;
        if r < n {
            return Some((e, r));
        }
        r -= n;
    }
    None
}

/// Structural mesh compatibility: same DOF layout over the same edges.
pub fn meshes_compatible(a: &Arc<Mesh>, b: &Arc<Mesh>) -> bool {
    if Arc::ptr_eq(a, b) {
        return true;
    }
    a.n_dof() == b.n_dof()
        && a.n_edges() == b.n_edges()
        && (0..a.n_edges()).all(|e| a.edge_elem_count(e) == b.edge_elem_count(e))
}
