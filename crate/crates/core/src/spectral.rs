//! Generalized eigendecomposition of the discrete operator and spectral
//! solution of the fractional problem, plus eigenvalue-growth diagnostics.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::assembly::OperatorPair;
use crate::error::{Error, Result};
use crate::field::{meshes_compatible, Field, FieldRole};
use crate::linalg::generalized_symmetric_eigen;
use crate::mesh::Mesh;
use std::sync::Arc;

/// Full generalized eigendecomposition `K e_j = lambda_j M e_j` with
/// ascending eigenvalues and `M`-orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    op: OperatorPair,
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

/// Computes the dense generalized eigendecomposition of an assembled
/// operator pair. Eigenvector signs follow a deterministic convention: the
/// first entry of non-negligible magnitude in each column is positive.
pub fn eigendecompose(op: &OperatorPair) -> Result<EigenBasis> {
    let k = op.stiffness.to_dense();
    let m = op.mass.to_dense();
    let (values, mut vectors) = generalized_symmetric_eigen(&k, &m)?;
    fix_signs(&mut vectors);
    Ok(EigenBasis {
        op: op.clone(),
        values,
        vectors,
    })
}

fn fix_signs(vectors: &mut DMatrix<f64>) {
    let n = vectors.nrows();
    for j in 0..vectors.ncols() {
        let col = vectors.column(j);
        let max = col.amax();
        let lead = (0..n).find(|&i| col[i].abs() > 1e-12 * max);
        if let Some(i) = lead {
            if col[i] < 0.0 {
                let neg = -&vectors.column(j);
                vectors.set_column(j, &neg);
            }
        }
    }
}

impl EigenBasis {
    pub fn mesh(&self) -> &Arc<Mesh> {
        self.op.mesh()
    }

    pub fn operator(&self) -> &OperatorPair {
        &self.op
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Coefficients of `f` in the basis: `c_j = e_j' M f`.
    pub fn project(&self, f: &Field) -> DVector<f64> {
        self.vectors.transpose() * self.op.mass.matvec(f.values())
    }

    /// Field with the given basis coefficients.
    pub fn expand(&self, coeffs: &DVector<f64>, role: FieldRole) -> Result<Field> {
        Field::new(self.mesh().clone(), &self.vectors * coeffs, role)
    }

    /// The `j`-th eigenfunction (0-based), `M`-normalized.
    pub fn eigenfunction(&self, j: usize) -> Result<Field> {
        Field::new(
            self.mesh().clone(),
            self.vectors.column(j).into_owned(),
            FieldRole::Eigenfunction,
        )
    }

    /// Writes a CSV with columns `j,lambda,weyl_ratio` where the last
    /// column is `lambda_j / j^2` (1-based `j`).
    pub fn write_eigenvalue_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "j,lambda,weyl_ratio")?;
        for (idx, &l) in self.values.iter().enumerate() {
            let j = idx + 1;
            writeln!(w, "{j},{l},{r}", r = l / (j * j) as f64)?;
        }
        Ok(())
    }
}

/// Solves `K^beta p = f` spectrally: `p = E diag(lambda^{-beta}) E' M f`.
/// Exact for the discrete operator; `beta >= 1` only.
pub fn solve_fractional(basis: &EigenBasis, f: &Field, beta: f64) -> Result<Field> {
    if !(beta >= 1.0) {
        return Err(Error::Validation(format!(
            "fractional exponent beta = {beta} must be >= 1"
        )));
    }
    if !meshes_compatible(basis.mesh(), f.mesh()) {
        return Err(Error::Dimension(
            "source field does not live on the eigenbasis mesh".into(),
        ));
    }
    let mut coeffs = basis.project(f);
    for (j, c) in coeffs.iter_mut().enumerate() {
        *c *= basis.values[j].powf(-beta);
    }
    basis.expand(&coeffs, FieldRole::Solution)
}

/// Empirical Weyl-law bracketing constants over the lower half of the
/// spectrum (the upper discrete half is discretization-polluted): returns
/// `(min_j lambda_j e^{|u|_inf} / j^2, max_j lambda_j e^{-|u|_inf} / j^2)`.
pub fn weyl_ratio(basis: &EigenBasis, u: &Field) -> (f64, f64) {
    let m = u.linf();
    let half = (basis.n() / 2).max(1);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for idx in 0..half {
        let j = (idx + 1) as f64;
        let l = basis.values[idx];
        lo = lo.min(l * m.exp() / (j * j));
        hi = hi.max(l * (-m).exp() / (j * j));
    }
    (lo, hi)
}

/// Empirical constant in the eigenvalue perturbation bound: the maximum
/// over `j` of `|lambda_j^{(1)^{-s}} - lambda_j^{(2)^{-s}}|` divided by
/// `exp((s+2) max(|u1|, |u2|)) |u1 - u2|_inf`. Returns 0 when the fields
/// are (numerically) identical.
pub fn eigen_perturbation_check(
    op1: &OperatorPair,
    op2: &OperatorPair,
    u1: &Field,
    u2: &Field,
    s: f64,
) -> Result<f64> {
    if !meshes_compatible(op1.mesh(), op2.mesh()) {
        return Err(Error::Dimension(
            "operator pairs live on different meshes".into(),
        ));
    }
    if !(s >= 0.0) {
        return Err(Error::Validation(format!("power s = {s} must be >= 0")));
    }
    let diff = (u1.values() - u2.values()).amax();
    if diff < 1e-14 {
        return Ok(0.0);
    }
    let b1 = eigendecompose(op1)?;
    let b2 = eigendecompose(op2)?;
    let m = u1.linf().max(u2.linf());
    let scale = ((s + 2.0) * m).exp() * diff;
    let mut worst: f64 = 0.0;
    for j in 0..b1.n() {
        let d = (b1.values[j].powf(-s) - b2.values[j].powf(-s)).abs();
        worst = worst.max(d / scale);
    }
    Ok(worst)
}
