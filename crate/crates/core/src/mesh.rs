//! Linear-element meshes on metric graphs.
//!
//! Each edge is subdivided uniformly into `ceil(length / h)` elements. Nodes
//! at a shared vertex are collapsed into a single global degree of freedom,
//! so piecewise-linear functions on the mesh are automatically continuous
//! across vertices. DOF ordering is deterministic: vertices first in input
//! order, then interior nodes edge by edge.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{GraphPoint, MetricGraph};

#[derive(Debug)]
pub struct Mesh {
    graph: Arc<MetricGraph>,
    h: f64,
    /// Elements per edge.
    elem_count: Vec<usize>,
    /// Uniform element width per edge.
    width: Vec<f64>,
    /// Global DOF index of the first interior node of each edge.
    interior_start: Vec<usize>,
    /// Global element id of the first element of each edge.
    elem_offset: Vec<usize>,
    /// Edge of each global element.
    elem_edge: Vec<usize>,
    n_dof: usize,
    /// Planar coordinates of each DOF.
    coords: Vec<(f64, f64)>,
    /// One `(edge, node index)` representative per DOF.
    representative: Vec<(usize, usize)>,
}

/// Builds a mesh with target element width `h > 0`.
pub fn build_mesh(graph: &Arc<MetricGraph>, h: f64) -> Result<Arc<Mesh>> {
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::Validation(format!("mesh size h = {h} must be positive")));
    }
    let nv = graph.n_vertices();
    let ne = graph.n_edges();
    let mut elem_count = Vec::with_capacity(ne);
    let mut width = Vec::with_capacity(ne);
    let mut interior_start = Vec::with_capacity(ne);
    let mut elem_offset = Vec::with_capacity(ne);
    let mut elem_edge = Vec::new();
    let mut n_dof = nv;
    let mut n_elems = 0usize;
    for (e, edge) in graph.edges().iter().enumerate() {
        let n = (edge.length / h).ceil().max(1.0) as usize;
        elem_count.push(n);
        width.push(edge.length / n as f64);
        interior_start.push(n_dof);
        elem_offset.push(n_elems);
        elem_edge.extend(std::iter::repeat(e).take(n));
        n_dof += n - 1;
        n_elems += n;
    }

    let mut mesh = Mesh {
        graph: graph.clone(),
        h,
        elem_count,
        width,
        interior_start,
        elem_offset,
        elem_edge,
        n_dof,
        coords: Vec::new(),
        representative: vec![(usize::MAX, 0); n_dof],
    };

    let mut coords = vec![(0.0, 0.0); n_dof];
    for (v, vert) in graph.vertices().iter().enumerate() {
        coords[v] = (vert.x, vert.y);
    }
    for e in 0..ne {
        for i in 0..=mesh.elem_count[e] {
            let dof = mesh.edge_node_dof(e, i);
            let p = GraphPoint::new(e, mesh.edge_node_t(e, i));
            coords[dof] = graph.embed(&p);
            if mesh.representative[dof].0 == usize::MAX {
                mesh.representative[dof] = (e, i);
            }
        }
    }
    mesh.coords = coords;
    Ok(Arc::new(mesh))
}

impl Mesh {
    pub fn graph(&self) -> &Arc<MetricGraph> {
        &self.graph
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_dof(&self) -> usize {
        self.n_dof
    }

    pub fn n_elements(&self) -> usize {
        self.elem_edge.len()
    }

    pub fn n_edges(&self) -> usize {
        self.elem_count.len()
    }

    /// Elements on edge `e`.
    pub fn edge_elem_count(&self, e: usize) -> usize {
        self.elem_count[e]
    }

    /// Uniform element width on edge `e`.
    pub fn edge_width(&self, e: usize) -> f64 {
        self.width[e]
    }

    /// Global DOF of node `i` of edge `e`; `i` runs from 0 (source vertex)
    /// to `edge_elem_count(e)` (target vertex).
    pub fn edge_node_dof(&self, e: usize, i: usize) -> usize {
        let n = self.elem_count[e];
        debug_assert!(i <= n);
        if i == 0 {
            self.graph.edges()[e].source
        } else if i == n {
            self.graph.edges()[e].target
        } else {
            self.interior_start[e] + i - 1
        }
    }

    /// Arclength position of node `i` of edge `e`.
    pub fn edge_node_t(&self, e: usize, i: usize) -> f64 {
        if i == self.elem_count[e] {
            self.graph.edges()[e].length
        } else {
            i as f64 * self.width[e]
        }
    }

    /// Planar coordinates of a DOF.
    pub fn dof_coords(&self, dof: usize) -> (f64, f64) {
        self.coords[dof]
    }

    /// A representative `(edge, t)` location for a DOF. Vertex DOFs pick
    /// their first occurrence in edge order.
    pub fn dof_point(&self, dof: usize) -> GraphPoint {
        let (e, i) = self.representative[dof];
        GraphPoint::new(e, self.edge_node_t(e, i))
    }

    pub fn element_edge(&self, elem: usize) -> usize {
        self.elem_edge[elem]
    }

    /// Index of an element within its edge's subdivision.
    pub fn element_local_index(&self, elem: usize) -> usize {
        elem - self.elem_offset[self.elem_edge[elem]]
    }

    pub fn element_width(&self, elem: usize) -> f64 {
        self.width[self.elem_edge[elem]]
    }

    /// Endpoint DOFs of a global element.
    pub fn element_dofs(&self, elem: usize) -> (usize, usize) {
        let e = self.elem_edge[elem];
        let k = elem - self.elem_offset[e];
        (self.edge_node_dof(e, k), self.edge_node_dof(e, k + 1))
    }

    /// Locates the element containing a point and the barycentric coordinate
    /// within it. At interior element boundaries the left element wins;
    /// `t = 0` maps to the first element and `t = length` to the last.
    pub fn locate(&self, p: &GraphPoint) -> Result<(usize, f64)> {
        if p.edge >= self.n_edges() {
            return Err(Error::Validation(format!("unknown edge index {}", p.edge)));
        }
        let len = self.graph.edges()[p.edge].length;
        if !p.t.is_finite() || p.t < 0.0 || p.t > len {
            return Err(Error::Validation(format!(
                "point {p} lies outside edge of length {len}"
            )));
        }
        let n = self.elem_count[p.edge];
        let offset = self.elem_offset[p.edge];
        if p.t <= 0.0 {
            return Ok((offset, 0.0));
        }
        if p.t >= len {
            return Ok((offset + n - 1, 1.0));
        }
        let s = p.t / self.width[p.edge];
        let idx = ((s.ceil() as usize).max(1) - 1).min(n - 1);
        let local = (s - idx as f64).clamp(0.0, 1.0);
        Ok((offset + idx, local))
    }
}
