//! Forward model: parameter-to-solution map, observation functionals,
//! Gaussian misfit potential, and synthetic data generation.

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::assembly::{assemble_stiffness, solve_elliptic};
use crate::error::{Error, Result};
use crate::field::{meshes_compatible, Field};
use crate::graph::GraphPoint;
use crate::mesh::Mesh;
use crate::spectral::{eigendecompose, solve_fractional};

/// Forward problem specification: reaction coefficient, fractional
/// exponent, and source field. Keeps a count of forward solves for
/// diagnostics.
#[derive(Debug)]
pub struct ForwardSpec {
    mesh: Arc<Mesh>,
    kappa: f64,
    beta: f64,
    source: Field,
    solves: AtomicU64,
}

impl ForwardSpec {
    pub fn new(mesh: Arc<Mesh>, kappa: f64, beta: f64, source: Field) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::Validation(format!("kappa = {kappa} must be positive")));
        }
        if !(beta >= 1.0) || !beta.is_finite() {
            return Err(Error::Validation(format!("beta = {beta} must be >= 1")));
        }
        if !meshes_compatible(&mesh, source.mesh()) {
            return Err(Error::Dimension(
                "source field does not live on the forward mesh".into(),
            ));
        }
        Ok(ForwardSpec {
            mesh,
            kappa,
            beta,
            source,
            solves: AtomicU64::new(0),
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn source(&self) -> &Field {
        &self.source
    }

    /// Number of forward solves performed through this spec.
    pub fn solve_count(&self) -> u64 {
        self.solves.load(Ordering::Relaxed)
    }

    /// Maps a log-diffusion field to the solution of the (fractional)
    /// problem. `beta = 1` uses the direct sparse solve, `beta > 1` the
    /// spectral route.
    pub fn forward_map(&self, u: &Field) -> Result<Field> {
        self.solves.fetch_add(1, Ordering::Relaxed);
        let op = assemble_stiffness(&self.mesh, u, self.kappa)?;
        if self.beta == 1.0 {
            solve_elliptic(&op, &self.source)
        } else {
            let basis = eigendecompose(&op)?;
            solve_fractional(&basis, &self.source, self.beta)
        }
    }
}

/// A single observation functional.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    /// Pointwise evaluation by linear interpolation within the containing
    /// element.
    Point(GraphPoint),
    /// A bounded linear functional given by nodal weights.
    Weights(DVector<f64>),
}

/// Observations `y_j = l_j(p) + noise` with independent Gaussian noise of
/// per-observation variance `variances[j]`.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    pub functionals: Vec<Functional>,
    pub y: DVector<f64>,
    pub variances: DVector<f64>,
}

impl ObservationSet {
    pub fn new(functionals: Vec<Functional>, y: DVector<f64>, variances: DVector<f64>) -> Result<Self> {
        if functionals.is_empty() {
            return Err(Error::Validation("observation set is empty".into()));
        }
        if functionals.len() != y.len() || y.len() != variances.len() {
            return Err(Error::Dimension(format!(
                "observation set sizes disagree: {} functionals, {} data, {} variances",
                functionals.len(),
                y.len(),
                variances.len()
            )));
        }
        if let Some(j) = variances.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Validation(format!(
                "observation {j} has non-positive variance {}",
                variances[j]
            )));
        }
        Ok(ObservationSet {
            functionals,
            y,
            variances,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.len() == 0
    }

    /// Replaces the data vector, keeping functionals and variances.
    pub fn with_data(&self, y: DVector<f64>) -> Result<Self> {
        ObservationSet::new(self.functionals.clone(), y, self.variances.clone())
    }

    /// Writes point observations as CSV `obs_id,edge_id,t,y,sigma`.
    pub fn write_csv(&self, mesh: &Mesh, w: &mut impl Write) -> Result<()> {
        writeln!(w, "obs_id,edge_id,t,y,sigma").map_err(|e| Error::io("<obs csv>", e))?;
        for (j, l) in self.functionals.iter().enumerate() {
            let p = match l {
                Functional::Point(p) => p,
                Functional::Weights(_) => {
                    return Err(Error::Validation(
                        "only point observations can be exported to CSV".into(),
                    ))
                }
            };
            let id = &mesh.graph().edges()[p.edge].id;
            writeln!(
                w,
                "{j},{id},{t},{y},{s}",
                t = p.t,
                y = self.y[j],
                s = self.variances[j].sqrt()
            )
            .map_err(|e| Error::io("<obs csv>", e))?;
        }
        Ok(())
    }
}

/// Mixed relative/absolute noise scales for synthetic data.
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel {
    pub n_rel: f64,
    pub n_abs: f64,
}

impl NoiseModel {
    pub fn new(n_rel: f64, n_abs: f64) -> Result<Self> {
        if !(n_rel >= 0.0) || !(n_abs >= 0.0) {
            return Err(Error::Validation(format!(
                "noise scales must be nonnegative, got ({n_rel}, {n_abs})"
            )));
        }
        Ok(NoiseModel { n_rel, n_abs })
    }
}

/// Applies the observation functionals to a solution field.
pub fn observe(p: &Field, obs: &ObservationSet) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(obs.len());
    for (j, l) in obs.functionals.iter().enumerate() {
        out[j] = apply_functional(p, l)?;
    }
    Ok(out)
}

fn apply_functional(p: &Field, l: &Functional) -> Result<f64> {
    match l {
        Functional::Point(point) => {
            let mesh = p.mesh();
            let (elem, local) = mesh.locate(point)?;
            let (a, b) = mesh.element_dofs(elem);
            Ok((1.0 - local) * p.values()[a] + local * p.values()[b])
        }
        Functional::Weights(w) => {
            if w.len() != p.len() {
                return Err(Error::Dimension(format!(
                    "weight functional has {} entries, field has {}",
                    w.len(),
                    p.len()
                )));
            }
            Ok(w.dot(p.values()))
        }
    }
}

/// Gaussian misfit potential `0.5 sum_j (y_j - g_j)^2 / variance_j`.
pub fn potential(g: &DVector<f64>, y: &DVector<f64>, variances: &DVector<f64>) -> Result<f64> {
    if g.len() != y.len() || y.len() != variances.len() {
        return Err(Error::Dimension(format!(
            "potential inputs disagree: {} predictions, {} data, {} variances",
            g.len(),
            y.len(),
            variances.len()
        )));
    }
    let mut phi = 0.0;
    for j in 0..g.len() {
        let v = variances[j];
        if !(v > 0.0) {
            return Err(Error::Validation(format!(
                "observation {j} has non-positive variance {v}"
            )));
        }
        let r = y[j] - g[j];
        phi += r * r / v;
    }
    Ok(0.5 * phi)
}

/// One point per mesh DOF, in DOF order; the default observation layout.
pub fn all_dof_points(mesh: &Mesh) -> Vec<GraphPoint> {
    (0..mesh.n_dof()).map(|d| mesh.dof_point(d)).collect()
}

/// Generates synthetic observations of `forward(u0)` at the given points:
/// `y_i = p0(x_i) + (n_rel |p0(x_i)| + n_abs) eps_i` with standard normal
/// `eps_i`, storing the generating variance per observation.
pub fn make_synthetic(
    spec: &ForwardSpec,
    u0: &Field,
    noise: &NoiseModel,
    at: &[GraphPoint],
    rng_seed: u64,
) -> Result<ObservationSet> {
    if noise.n_rel + noise.n_abs <= 0.0 {
        return Err(Error::Validation(
            "noise model is degenerate: n_rel + n_abs must be positive".into(),
        ));
    }
    if at.is_empty() {
        return Err(Error::Validation("no observation points given".into()));
    }
    let p0 = spec.forward_map(u0)?;
    let functionals: Vec<Functional> = at.iter().map(|p| Functional::Point(*p)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut y = DVector::zeros(at.len());
    let mut variances = DVector::zeros(at.len());
    for (j, l) in functionals.iter().enumerate() {
        let value = apply_functional(&p0, l)?;
        let sigma = noise.n_rel * value.abs() + noise.n_abs;
        if !(sigma > 0.0) {
            return Err(Error::Validation(format!(
                "observation {j} has degenerate noise scale 0 (value {value})"
            )));
        }
        let eps: f64 = rng.sample(StandardNormal);
        y[j] = value + sigma * eps;
        variances[j] = sigma * sigma;
    }
    ObservationSet::new(functionals, y, variances)
}
