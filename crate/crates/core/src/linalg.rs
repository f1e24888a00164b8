//! Sparse symmetric matrices with mesh-induced sparsity and a direct
//! Cholesky solver that exploits it.
//!
//! Every operator assembled from linear elements on a metric graph couples
//! only neighbouring nodes along an edge, plus the shared vertex DOFs. We
//! store one tridiagonal block per edge and factor by eliminating the
//! per-edge interior chains first, leaving a small dense Schur complement
//! on the vertex DOFs. Factorization and solves are O(n) in the number of
//! DOFs and fully deterministic.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Symmetric matrix with the sparsity of a linear-element discretization:
/// per-edge tridiagonal blocks over the edge's node chain, summed into
/// shared vertex rows.
#[derive(Debug, Clone)]
pub struct GraphMatrix {
    mesh: Arc<Mesh>,
    /// Per edge: diagonal contributions at the edge's `n_e + 1` nodes.
    diag: Vec<Vec<f64>>,
    /// Per edge: off-diagonal coupling of consecutive nodes (`n_e` entries).
    off: Vec<Vec<f64>>,
}

impl GraphMatrix {
    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let diag = (0..mesh.n_edges())
            .map(|e| vec![0.0; mesh.edge_elem_count(e) + 1])
            .collect();
        let off = (0..mesh.n_edges())
            .map(|e| vec![0.0; mesh.edge_elem_count(e)])
            .collect();
        GraphMatrix { mesh, diag, off }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn n(&self) -> usize {
        self.mesh.n_dof()
    }

    /// Accumulates a symmetric 2x2 element block `[[a, b], [b, c]]` on
    /// element `elem` of edge `e`.
    pub fn add_element(&mut self, e: usize, elem: usize, a: f64, b: f64, c: f64) {
        self.diag[e][elem] += a;
        self.diag[e][elem + 1] += c;
        self.off[e][elem] += b;
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.n());
        let mut y = DVector::zeros(self.n());
        for e in 0..self.mesh.n_edges() {
            let n = self.mesh.edge_elem_count(e);
            for i in 0..=n {
                let d = self.mesh.edge_node_dof(e, i);
                y[d] += self.diag[e][i] * x[d];
            }
            for i in 0..n {
                let d0 = self.mesh.edge_node_dof(e, i);
                let d1 = self.mesh.edge_node_dof(e, i + 1);
                y[d0] += self.off[e][i] * x[d1];
                y[d1] += self.off[e][i] * x[d0];
            }
        }
        y
    }

    /// Quadratic form `x' A x`.
    pub fn quadratic(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.matvec(x))
    }

    /// Weighted norm `sqrt(x' A x)`; meaningful for SPD matrices.
    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        self.quadratic(x).max(0.0).sqrt()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for e in 0..self.mesh.n_edges() {
            let ne = self.mesh.edge_elem_count(e);
            for i in 0..=ne {
                let d = self.mesh.edge_node_dof(e, i);
                m[(d, d)] += self.diag[e][i];
            }
            for i in 0..ne {
                let d0 = self.mesh.edge_node_dof(e, i);
                let d1 = self.mesh.edge_node_dof(e, i + 1);
                m[(d0, d1)] += self.off[e][i];
                m[(d1, d0)] += self.off[e][i];
            }
        }
        m
    }

    /// Row `i` as a dense vector.
    pub fn row(&self, i: usize) -> DVector<f64> {
        let mut unit = DVector::zeros(self.n());
        unit[i] = 1.0;
        self.matvec(&unit)
    }

    /// Infinity norm (max absolute row sum).
    pub fn inf_norm(&self) -> f64 {
        let mut sums = vec![0.0; self.n()];
        for e in 0..self.mesh.n_edges() {
            let n = self.mesh.edge_elem_count(e);
            for i in 0..=n {
                sums[self.mesh.edge_node_dof(e, i)] += self.diag[e][i].abs();
            }
            for i in 0..n {
                let o = self.off[e][i].abs();
                sums[self.mesh.edge_node_dof(e, i)] += o;
                sums[self.mesh.edge_node_dof(e, i + 1)] += o;
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Cholesky-type factorization; fails if the matrix is not positive
    /// definite.
    pub fn factor(&self) -> Result<GraphFactor> {
        GraphFactor::new(self)
    }
}

/// Direct factorization of an SPD [`GraphMatrix`]: per-edge interior chains
/// are eliminated by tridiagonal Cholesky, then the vertex-block Schur
/// complement is factored densely. Implicitly this is `P A P' = L L'` for
/// the permutation putting interior DOFs before vertex DOFs; all methods
/// work in the original DOF ordering.
#[derive(Debug)]
pub struct GraphFactor {
    mesh: Arc<Mesh>,
    /// Per edge: Cholesky diagonal of the interior tridiagonal block
    /// (`n_e - 1` entries).
    l_diag: Vec<Vec<f64>>,
    /// Per edge: Cholesky subdiagonal (`n_e - 2` entries).
    l_sub: Vec<Vec<f64>>,
    /// Coupling of the source vertex to the first interior node.
    b_first: Vec<f64>,
    /// Coupling of the last interior node to the target vertex.
    b_last: Vec<f64>,
    schur: Cholesky<f64, Dyn>,
    /// Cached lower factor of the Schur complement.
    schur_l: DMatrix<f64>,
}

impl GraphFactor {
    fn new(a: &GraphMatrix) -> Result<Self> {
        let mesh = a.mesh.clone();
        let nv = mesh.graph().n_vertices();
        let ne = mesh.n_edges();
        let mut l_diag = Vec::with_capacity(ne);
        let mut l_sub = Vec::with_capacity(ne);
        let mut b_first = vec![0.0; ne];
        let mut b_last = vec![0.0; ne];
        let mut schur = DMatrix::<f64>::zeros(nv, nv);

        for e in 0..ne {
            let n = mesh.edge_elem_count(e);
            let k = n - 1; // interior nodes on this edge
            let src = mesh.graph().edges()[e].source;
            let tgt = mesh.graph().edges()[e].target;

            // Vertex diagonal contributions of this edge.
            schur[(src, src)] += a.diag[e][0];
            schur[(tgt, tgt)] += a.diag[e][n];

            if k == 0 {
                // Single-element edge: direct vertex-vertex coupling.
                let o = a.off[e][0];
                if src == tgt {
                    schur[(src, src)] += 2.0 * o;
                } else {
                    schur[(src, tgt)] += o;
                    schur[(tgt, src)] += o;
                }
                l_diag.push(Vec::new());
                l_sub.push(Vec::new());
                continue;
            }

            // Tridiagonal Cholesky of the interior block (nodes 1..=k).
            let mut ld = vec![0.0; k];
            let mut ls = vec![0.0; k.saturating_sub(1)];
            for j in 0..k {
                let mut d = a.diag[e][j + 1];
                if j > 0 {
                    ls[j - 1] = a.off[e][j] / ld[j - 1];
                    d -= ls[j - 1] * ls[j - 1];
                }
                if !(d > 0.0) || !d.is_finite() {
                    return Err(Error::Numerical(format!(
                        "matrix not positive definite at interior node {j} of edge {e}"
                    )));
                }
                ld[j] = d.sqrt();
            }

            b_first[e] = a.off[e][0];
            b_last[e] = a.off[e][n - 1];

            // Schur contribution: B' T^{-1} B over this edge's two (or one,
            // for a loop) vertex columns.
            let mut col_src = vec![0.0; k];
            col_src[0] = b_first[e];
            let mut col_tgt = vec![0.0; k];
            col_tgt[k - 1] += b_last[e];
            let z_src = tridiag_solve(&ld, &ls, &col_src);
            let z_tgt = tridiag_solve(&ld, &ls, &col_tgt);
            let ss = b_first[e] * z_src[0];
            let tt = b_last[e] * z_tgt[k - 1];
            let st = b_first[e] * z_tgt[0];
            if src == tgt {
                schur[(src, src)] -= ss + tt + 2.0 * st;
            } else {
                schur[(src, src)] -= ss;
                schur[(tgt, tgt)] -= tt;
                schur[(src, tgt)] -= st;
                schur[(tgt, src)] -= st;
            }

            l_diag.push(ld);
            l_sub.push(ls);
        }

        let chol = Cholesky::new(schur).ok_or_else(|| {
            Error::Numerical("vertex Schur complement is not positive definite".into())
        })?;
        let schur_l = chol.l();
        Ok(GraphFactor {
            mesh,
            l_diag,
            l_sub,
            b_first,
            b_last,
            schur: chol,
            schur_l,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    fn interior_range(&self, e: usize) -> (usize, usize) {
        let k = self.l_diag[e].len();
        // Interior DOFs of an edge are contiguous by construction.
        if k == 0 {
            (0, 0)
        } else {
            let start = self.mesh.edge_node_dof(e, 1);
            (start, k)
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let nv = self.mesh.graph().n_vertices();
        let mut x = DVector::zeros(b.len());

        // Vertex right-hand side: b_V - B' T^{-1} b_I.
        let mut rhs_v = DVector::from_fn(nv, |v, _| b[v]);
        for e in 0..self.mesh.n_edges() {
            let (start, k) = self.interior_range(e);
            if k == 0 {
                continue;
            }
            let bi: Vec<f64> = (0..k).map(|j| b[start + j]).collect();
            let t = tridiag_solve(&self.l_diag[e], &self.l_sub[e], &bi);
            let src = self.mesh.graph().edges()[e].source;
            let tgt = self.mesh.graph().edges()[e].target;
            rhs_v[src] -= self.b_first[e] * t[0];
            rhs_v[tgt] -= self.b_last[e] * t[k - 1];
        }
        let xv = self.schur.solve(&rhs_v);

        // Interior back-substitution: x_I = T^{-1} (b_I - B x_V).
        for e in 0..self.mesh.n_edges() {
            let (start, k) = self.interior_range(e);
            if k == 0 {
                continue;
            }
            let src = self.mesh.graph().edges()[e].source;
            let tgt = self.mesh.graph().edges()[e].target;
            let mut bi: Vec<f64> = (0..k).map(|j| b[start + j]).collect();
            bi[0] -= self.b_first[e] * xv[src];
            bi[k - 1] -= self.b_last[e] * xv[tgt];
            let xi = tridiag_solve(&self.l_diag[e], &self.l_sub[e], &bi);
            for j in 0..k {
                x[start + j] = xi[j];
            }
        }
        for v in 0..nv {
            x[v] = xv[v];
        }
        x
    }

    /// Applies the implicit lower factor: returns `L xi` where `L L' = A`.
    /// Feeding i.i.d. standard normals through this map yields a Gaussian
    /// vector with covariance `A`.
    pub fn apply_factor(&self, xi: &DVector<f64>) -> DVector<f64> {
        let nv = self.mesh.graph().n_vertices();
        let mut w = DVector::zeros(xi.len());
        let mut wv = DVector::zeros(nv);
        for e in 0..self.mesh.n_edges() {
            let (start, k) = self.interior_range(e);
            if k == 0 {
                continue;
            }
            let ld = &self.l_diag[e];
            let ls = &self.l_sub[e];
            // w_I = L_T xi_I
            for j in 0..k {
                let mut v = ld[j] * xi[start + j];
                if j > 0 {
                    v += ls[j - 1] * xi[start + j - 1];
                }
                w[start + j] = v;
            }
            // y = L_T^{-T} xi_I, then accumulate B' y into the vertex part.
            let xi_i: Vec<f64> = (0..k).map(|j| xi[start + j]).collect();
            let y = upper_solve(ld, ls, &xi_i);
            let src = self.mesh.graph().edges()[e].source;
            let tgt = self.mesh.graph().edges()[e].target;
            wv[src] += self.b_first[e] * y[0];
            wv[tgt] += self.b_last[e] * y[k - 1];
        }
        let xiv = DVector::from_fn(nv, |v, _| xi[v]);
        wv += &self.schur_l * xiv;
        for v in 0..nv {
            w[v] = wv[v];
        }
        w
    }

    /// Solves `L z = y` with the implicit lower factor, so that
    /// `|z|^2 = y' A^{-1} y`.
    pub fn solve_factor(&self, y: &DVector<f64>) -> DVector<f64> {
        let nv = self.mesh.graph().n_vertices();
        let mut z = DVector::zeros(y.len());
        let mut rhs_v = DVector::from_fn(nv, |v, _| y[v]);
        for e in 0..self.mesh.n_edges() {
            let (start, k) = self.interior_range(e);
            if k == 0 {
                continue;
            }
            let yi: Vec<f64> = (0..k).map(|j| y[start + j]).collect();
            let t = tridiag_solve(&self.l_diag[e], &self.l_sub[e], &yi);
            let src = self.mesh.graph().edges()[e].source;
            let tgt = self.mesh.graph().edges()[e].target;
            rhs_v[src] -= self.b_first[e] * t[0];
            rhs_v[tgt] -= self.b_last[e] * t[k - 1];
            // z_I = L_T^{-1} y_I
            let zi = lower_solve(&self.l_diag[e], &self.l_sub[e], &yi);
            for j in 0..k {
                z[start + j] = zi[j];
            }
        }
        let zv = self
            .schur_l
            .solve_lower_triangular(&rhs_v)
            .expect("Schur factor is nonsingular by construction");
        for v in 0..nv {
            z[v] = zv[v];
        }
        z
    }
}

/// Solves `A x = b` and polishes with iterative refinement until the
/// backward error satisfies `|A x - b| <= tol * (|b| + |A| |x|)`. The
/// second term keeps the criterion attainable for the badly conditioned
/// operators that large diffusion fields produce, where the computed
/// residual itself carries `eps * |A| |x|` of rounding noise.
pub fn solve_refined(
    a: &GraphMatrix,
    factor: &GraphFactor,
    b: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    let b_norm = b.norm();
    let mut x = factor.solve(b);
    if b_norm == 0.0 {
        return Ok(x);
    }
    let a_norm = a.inf_norm();
    let scale = |x: &DVector<f64>| b_norm + a_norm * x.norm();
    for _ in 0..4 {
        let r = b - a.matvec(&x);
        if r.norm() <= tol * scale(&x) {
            return Ok(x);
        }
        x += factor.solve(&r);
    }
    let res = (b - a.matvec(&x)).norm() / scale(&x);
    if res <= tol {
        Ok(x)
    } else {
        Err(Error::Numerical(format!(
            "solve backward error {res:.3e} exceeds tolerance {tol:.1e} after refinement"
        )))
    }
}

fn lower_solve(ld: &[f64], ls: &[f64], b: &[f64]) -> Vec<f64> {
    let k = ld.len();
    let mut y = vec![0.0; k];
    for j in 0..k {
        let mut v = b[j];
        if j > 0 {
            v -= ls[j - 1] * y[j - 1];
        }
        y[j] = v / ld[j];
    }
    y
}

fn upper_solve(ld: &[f64], ls: &[f64], b: &[f64]) -> Vec<f64> {
    let k = ld.len();
    let mut x = vec![0.0; k];
    for j in (0..k).rev() {
        let mut v = b[j];
        if j + 1 < k {
            v -= ls[j] * x[j + 1];
        }
        x[j] = v / ld[j];
    }
    x
}

fn tridiag_solve(ld: &[f64], ls: &[f64], b: &[f64]) -> Vec<f64> {
    upper_solve(ld, ls, &lower_solve(ld, ls, b))
}

/// Dense generalized symmetric eigendecomposition `K e = lambda M e` with
/// `M`-orthonormal eigenvectors, eigenvalues ascending. Reduction to
/// standard form through the Cholesky factor of `M`.
pub fn generalized_symmetric_eigen(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = k.nrows();
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::Numerical("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let g = l
        .solve_lower_triangular(k)
        .ok_or_else(|| Error::Numerical("singular mass Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&g.transpose())
        .ok_or_else(|| Error::Numerical("singular mass Cholesky factor".into()))?;
    // Symmetrize to wash out reduction round-off before the eigensolver.
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let lt = l.transpose();
    let q = eig.eigenvectors;
    let vecs = lt
        .solve_upper_triangular(&q)
        .ok_or_else(|| Error::Numerical("singular mass Cholesky factor".into()))?;

    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let mut sorted = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        sorted.set_column(dst, &vecs.column(src));
    }
    if values.iter().any(|v| !v.is_finite()) || sorted.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "eigendecomposition produced non-finite entries".into(),
        ));
    }
    Ok((values, sorted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;
    use crate::testutil::{interval, star3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Assembles a strictly diagonally dominant test matrix on the mesh.
    fn test_matrix(mesh: &Arc<Mesh>, seed: u64) -> GraphMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = GraphMatrix::zeros(mesh.clone());
        for e in 0..mesh.n_edges() {
            for i in 0..mesh.edge_elem_count(e) {
                let w = mesh.edge_width(e);
                let c = 0.5 + rng.random::<f64>();
                a.add_element(e, i, c / w + w / 3.0, -c / w + w / 6.0, c / w + w / 3.0);
            }
        }
        a
    }

    #[test]
    fn factor_solve_matches_dense() {
        for (mesh, seed) in [
            (build_mesh(&star3(), 0.21).unwrap(), 1u64),
            (build_mesh(&interval(2.0), 0.4).unwrap(), 2),
            (build_mesh(&interval(0.3), 1.0).unwrap(), 3), // single element
        ] {
            let a = test_matrix(&mesh, seed);
            let f = a.factor().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let b = DVector::from_fn(mesh.n_dof(), |_, _| rng.random::<f64>() - 0.5);
            let x = f.solve(&b);
            let dense = a.to_dense();
            let x_ref = dense.clone().lu().solve(&b).unwrap();
            assert!((x - x_ref).norm() < 1e-10, "mesh n={}", mesh.n_dof());
        }
    }

    #[test]
    fn implicit_factor_reconstructs_matrix() {
        let mesh = build_mesh(&star3(), 0.26).unwrap();
        let a = test_matrix(&mesh, 7);
        let f = a.factor().unwrap();
        let n = mesh.n_dof();
        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut unit = DVector::zeros(n);
            unit[j] = 1.0;
            l.set_column(j, &f.apply_factor(&unit));
        }
        let rebuilt = &l * l.transpose();
        assert!((rebuilt - a.to_dense()).norm() < 1e-10);
    }

    #[test]
    fn solve_factor_inverts_apply_factor() {
        let mesh = build_mesh(&star3(), 0.3).unwrap();
        let a = test_matrix(&mesh, 9);
        let f = a.factor().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xi = DVector::from_fn(mesh.n_dof(), |_, _| rng.random::<f64>() - 0.5);
        let y = f.apply_factor(&xi);
        let back = f.solve_factor(&y);
        assert!((back - xi).norm() < 1e-11);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let mesh = build_mesh(&interval(1.0), 0.25).unwrap();
        let mut a = GraphMatrix::zeros(mesh.clone());
        for i in 0..4 {
            a.add_element(0, i, -1.0, 0.1, -1.0);
        }
        assert!(a.factor().is_err());
    }

    #[test]
    fn generalized_eigen_small_case() {
        // K = diag(2, 8), M = I: eigenvalues 2, 8 with unit eigenvectors.
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![8.0, 2.0]));
        let m = DMatrix::identity(2, 2);
        let (vals, vecs) = generalized_symmetric_eigen(&k, &m).unwrap();
        assert!((vals[0] - 2.0).abs() < 1e-12 && (vals[1] - 8.0).abs() < 1e-12);
        let id = vecs.transpose() * m * &vecs;
        assert!((id - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }
}
