//! Adaptive preconditioned Crank–Nicolson sampling with temperature
//! annealing, posterior summaries, and a Hellinger-distance diagnostic.
//!
//! The proposal `v = sqrt(1 - tau^2) u + tau xi` with prior draws `xi`
//! leaves the prior invariant, so the accept/reject ratio involves only the
//! misfit potential. The log ratio is divided by a temperature that cools
//! geometrically to 1; the step size adapts toward a target acceptance
//! rate.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{Field, FieldRole};
use crate::forward::{observe, potential, ForwardSpec, ObservationSet};
use crate::mesh::Mesh;
use crate::prior::PriorSpec;

/// Misfit potential evaluated on parameter fields.
pub trait Potential {
    fn evaluate(&self, u: &Field) -> Result<f64>;
}

impl<F> Potential for F
where
    F: Fn(&Field) -> Result<f64>,
{
    fn evaluate(&self, u: &Field) -> Result<f64> {
        self(u)
    }
}

/// The standard Gaussian data misfit `0.5 |y - G(u)|^2_{Sigma^{-1}}`.
pub struct GaussianPotential<'a> {
    pub forward: &'a ForwardSpec,
    pub observations: &'a ObservationSet,
}

impl Potential for GaussianPotential<'_> {
    fn evaluate(&self, u: &Field) -> Result<f64> {
        let p = self.forward.forward_map(u)?;
        let g = observe(&p, self.observations)?;
        potential(&g, &self.observations.y, &self.observations.variances)
    }
}

/// Chain hyperparameters.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    /// Initial proposal step size in (0, 1].
    pub tau: f64,
    /// Lower bound for the adapted step size.
    pub tau_min: f64,
    /// Initial annealing temperature, >= 1.
    pub t0: f64,
    /// Geometric cooling factor in (0, 1].
    pub zeta: f64,
    /// Total iterations.
    pub n_iters: usize,
    /// Adaptation (and cooling) interval.
    pub n_adapt: usize,
    /// Target acceptance rate in (0, 1).
    pub r_target: f64,
    /// Burn-in iterations discarded from the retained set.
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
    pub rng_seed: u64,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min > 0.0 && self.tau_min <= self.tau && self.tau <= 1.0) {
            return Err(Error::Validation(format!(
                "step sizes must satisfy 0 < tau_min <= tau <= 1, got ({}, {})",
                self.tau_min, self.tau
            )));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::Validation(format!(
                "cooling factor zeta = {} must lie in (0, 1]",
                self.zeta
            )));
        }
        if !(self.t0 >= 1.0) {
            return Err(Error::Validation(format!(
                "initial temperature t0 = {} must be >= 1",
                self.t0
            )));
        }
        if !(self.r_target > 0.0 && self.r_target < 1.0) {
            return Err(Error::Validation(format!(
                "target acceptance rate {} must lie in (0, 1)",
                self.r_target
            )));
        }
        if self.n_adapt == 0 || self.n_iters == 0 {
            return Err(Error::Validation(
                "iteration and adaptation counts must be positive".into(),
            ));
        }
        if self.burn_in >= self.n_iters {
            return Err(Error::Validation(format!(
                "burn-in {} must be smaller than the iteration count {}",
                self.burn_in, self.n_iters
            )));
        }
        if self.thin == 0 {
            return Err(Error::Validation("thinning stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Temperature at (1-based) iteration `n`.
    pub fn temperature(&self, n: usize) -> f64 {
        let k = (n / self.n_adapt) as i32;
        (self.t0 * self.zeta.powi(k)).max(1.0)
    }

    /// Number of iterations until the temperature schedule reaches 1.
    pub fn annealing_steps(&self) -> usize {
        if self.t0 <= 1.0 {
            return 0;
        }
        if self.zeta >= 1.0 {
            return usize::MAX;
        }
        let k = (self.t0.ln() / (1.0 / self.zeta).ln()).ceil() as usize;
        k * self.n_adapt
    }
}

/// Step-size update toward the target acceptance rate: shrink by 0.9 when
/// clearly under target, grow by 1.2 when clearly over, clamped to
/// `[tau_min, 1]`.
pub fn adapt_step_size(tau: f64, recent_rate: f64, cfg: &ChainConfig) -> f64 {
    if recent_rate < 0.9 * cfg.r_target {
        (0.9 * tau).max(cfg.tau_min)
    } else if recent_rate > 1.1 * cfg.r_target {
        (1.2 * tau).min(1.0)
    } else {
        tau
    }
}

/// Outcome of a single proposal step.
pub struct PcnStep {
    pub state: Field,
    pub accepted: bool,
    pub phi: f64,
}

/// One tempered pCN step from `u` with cached potential `phi_u`. Draws the
/// prior innovation from `rng`, evaluates the potential once (for the
/// proposal only), and accepts with probability
/// `min(1, exp((phi_u - phi_v) / temperature))`.
pub fn pcn_step<P, R>(
    u: &Field,
    phi_u: f64,
    tau: f64,
    temperature: f64,
    prior: &PriorSpec,
    target: &P,
    rng: &mut R,
) -> Result<PcnStep>
where
    P: Potential + ?Sized,
    R: Rng + ?Sized,
{
    debug_assert!(tau > 0.0 && tau <= 1.0);
    debug_assert!(temperature >= 1.0);
    let xi = prior.sample_with_rng(rng);
    let contraction = (1.0 - tau * tau).max(0.0).sqrt();
    let v_values = u.values() * contraction + xi.values() * tau;
    let v = Field::new(prior.mesh().clone(), v_values, FieldRole::Parameter)?;
    let phi_v = target.evaluate(&v)?;
    let log_ratio = (phi_u - phi_v) / temperature;
    // Nonnegative log ratios accept deterministically; this also clamps the
    // exponential away from overflow.
    let accepted = log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp();
    if accepted {
        Ok(PcnStep {
            state: v,
            accepted: true,
            phi: phi_v,
        })
    } else {
        Ok(PcnStep {
            state: u.clone(),
            accepted: false,
            phi: phi_u,
        })
    }
}

/// Full record of a chain run.
#[derive(Debug, Clone)]
pub struct ChainResult {
    mesh: Arc<Mesh>,
    /// Retained (post burn-in, thinned) parameter states.
    pub samples: Vec<DVector<f64>>,
    /// Potential of each retained state.
    pub sample_phi: Vec<f64>,
    /// Prior quadratic form of each retained state.
    pub sample_prior_quad: Vec<f64>,
    /// Per-iteration acceptance indicators (length `n_iters`).
    pub accepted: Vec<bool>,
    /// Step size used at each iteration.
    pub tau_trace: Vec<f64>,
    /// Temperature at each iteration.
    pub temperature_trace: Vec<f64>,
    /// Potential of the current state after each iteration.
    pub phi_trace: Vec<f64>,
    /// Prior quadratic of the current state after each iteration.
    pub prior_quad_trace: Vec<f64>,
    /// Potential evaluations performed (one per iteration plus the
    /// initialization).
    pub potential_evaluations: u64,
}

impl ChainResult {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn n_iters(&self) -> usize {
        self.accepted.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        let hits = self.accepted.iter().filter(|&&a| a).count();
        hits as f64 / self.accepted.len().max(1) as f64
    }

    /// Acceptance rate over the stable period: the iterations at
    /// temperature 1, or the last half of the chain if the schedule never
    /// cooled that far.
    pub fn stable_acceptance_rate(&self) -> f64 {
        let stable: Vec<usize> = (0..self.n_iters())
            .filter(|&i| self.temperature_trace[i] <= 1.0)
            .collect();
        let idx: Vec<usize> = if stable.is_empty() {
            (self.n_iters() / 2..self.n_iters()).collect()
        } else {
            stable
        };
        let hits = idx.iter().filter(|&&i| self.accepted[i]).count();
        hits as f64 / idx.len().max(1) as f64
    }

    /// Writes the trace as CSV `n,accepted,tau,T,phi,prior_quad`.
    pub fn write_trace_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "n,accepted,tau,T,phi,prior_quad")?;
        for i in 0..self.n_iters() {
            writeln!(
                w,
                "{n},{a},{tau},{t},{phi},{q}",
                n = i + 1,
                a = u8::from(self.accepted[i]),
                tau = self.tau_trace[i],
                t = self.temperature_trace[i],
                phi = self.phi_trace[i],
                q = self.prior_quad_trace[i]
            )?;
        }
        Ok(())
    }
}

/// Runs the adaptive tempered pCN chain against an arbitrary potential.
pub fn run_chain_with<P>(cfg: &ChainConfig, prior: &PriorSpec, target: &P) -> Result<ChainResult>
where
    P: Potential + ?Sized,
{
    cfg.validate()?;
    let anneal = cfg.annealing_steps();
    if cfg.burn_in < anneal {
        log::warn!(
            "burn-in {} does not cover the annealing phase ({} iterations); \
             retained samples include tempered states",
            cfg.burn_in,
            anneal
        );
    }

    let n = cfg.n_iters;
    let retained_cap = (n - cfg.burn_in).div_ceil(cfg.thin);
    let mut result = ChainResult {
        mesh: prior.mesh().clone(),
        samples: Vec::with_capacity(retained_cap),
        sample_phi: Vec::with_capacity(retained_cap),
        sample_prior_quad: Vec::with_capacity(retained_cap),
        accepted: Vec::with_capacity(n),
        tau_trace: Vec::with_capacity(n),
        temperature_trace: Vec::with_capacity(n),
        phi_trace: Vec::with_capacity(n),
        prior_quad_trace: Vec::with_capacity(n),
        potential_evaluations: 0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut u = prior.sample_with_rng(&mut rng);
    let mut phi = target
        .evaluate(&u)
        .map_err(|e| Error::Numerical(format!("potential evaluation failed at initialization: {e}")))?;
    result.potential_evaluations += 1;
    let mut quad = prior.precision_quadratic(&u)?;
    let mut tau = cfg.tau;

    for iter in 1..=n {
        let temperature = cfg.temperature(iter);
        let step = pcn_step(&u, phi, tau, temperature, prior, target, &mut rng)
            .map_err(|e| Error::Numerical(format!("iteration {iter}: {e}")))?;
        result.potential_evaluations += 1;
        if step.accepted {
            u = step.state;
            phi = step.phi;
            quad = prior.precision_quadratic(&u)?;
        }
        result.accepted.push(step.accepted);
        result.tau_trace.push(tau);
        result.temperature_trace.push(temperature);
        result.phi_trace.push(phi);
        result.prior_quad_trace.push(quad);

        if iter % cfg.n_adapt == 0 {
            let window = &result.accepted[iter - cfg.n_adapt..iter];
            let rate = window.iter().filter(|&&a| a).count() as f64 / cfg.n_adapt as f64;
            tau = adapt_step_size(tau, rate, cfg);
        }

        if iter > cfg.burn_in && (iter - cfg.burn_in - 1) % cfg.thin == 0 {
            result.samples.push(u.values().clone());
            result.sample_phi.push(phi);
            result.sample_prior_quad.push(quad);
        }
    }
    Ok(result)
}

/// Runs the chain against the standard Gaussian data misfit.
pub fn run_chain(
    cfg: &ChainConfig,
    prior: &PriorSpec,
    forward: &ForwardSpec,
    observations: &ObservationSet,
) -> Result<ChainResult> {
    let target = GaussianPotential {
        forward,
        observations,
    };
    run_chain_with(cfg, prior, &target)
}

/// Posterior summaries over the retained samples.
pub struct PosteriorSummary {
    pub mean: Field,
    pub std: Field,
    /// The retained sample minimizing potential + prior quadratic (the
    /// discrete negative log-posterior).
    pub map: Field,
}

pub fn posterior_summaries(result: &ChainResult, prior: &PriorSpec) -> Result<PosteriorSummary> {
    if result.samples.is_empty() {
        return Err(Error::Validation("no retained samples".into()));
    }
    if !crate::field::meshes_compatible(result.mesh(), prior.mesh()) {
        return Err(Error::Dimension("chain and prior meshes disagree".into()));
    }
    let n = result.samples[0].len();
    let count = result.samples.len() as f64;
    let mut mean = DVector::<f64>::zeros(n);
    for s in &result.samples {
        mean += s;
    }
    mean /= count;
    let mut var = DVector::<f64>::zeros(n);
    for s in &result.samples {
        let d = s - &mean;
        var += d.component_mul(&d);
    }
    var /= count;
    let std = var.map(|v| v.max(0.0).sqrt());

    let mut best = 0;
    let mut best_obj = f64::INFINITY;
    for i in 0..result.samples.len() {
        let obj = result.sample_phi[i] + result.sample_prior_quad[i];
        if obj < best_obj {
            best_obj = obj;
            best = i;
        }
    }
    Ok(PosteriorSummary {
        mean: Field::new(result.mesh().clone(), mean, FieldRole::Parameter)?,
        std: Field::new(result.mesh().clone(), std, FieldRole::Parameter)?,
        map: Field::new(result.mesh().clone(), result.samples[best].clone(), FieldRole::Parameter)?,
    })
}

/// Prior Monte Carlo estimate of the Hellinger distance between the
/// posteriors for data `obs_y.y` and `obs_yprime.y`. Both observation sets
/// must share functionals and covariance. Draws use per-draw RNG streams,
/// so the estimate is deterministic given the seed.
pub fn hellinger_estimate(
    prior: &PriorSpec,
    forward: &ForwardSpec,
    obs_y: &ObservationSet,
    obs_yprime: &ObservationSet,
    n_samples: usize,
    rng_seed: u64,
) -> Result<f64> {
    if obs_y.functionals != obs_yprime.functionals {
        return Err(Error::Validation(
            "observation sets must share functionals".into(),
        ));
    }
    if obs_y.variances != obs_yprime.variances {
        return Err(Error::Validation(
            "observation sets must share covariance".into(),
        ));
    }
    if n_samples == 0 {
        return Err(Error::Validation("n_samples must be positive".into()));
    }
    let mut phi_a = Vec::with_capacity(n_samples);
    let mut phi_b = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(k as u64 + 1);
        let u = prior.sample_with_rng(&mut rng);
        let p = forward.forward_map(&u)?;
        let g = observe(&p, obs_y)?;
        phi_a.push(potential(&g, &obs_y.y, &obs_y.variances)?);
        phi_b.push(potential(&g, &obs_yprime.y, &obs_yprime.variances)?);
    }
    let shift_a = phi_a.iter().cloned().fold(f64::INFINITY, f64::min);
    let shift_b = phi_b.iter().cloned().fold(f64::INFINITY, f64::min);
    if !shift_a.is_finite() || !shift_b.is_finite() {
        return Err(Error::Numerical("non-finite potential in estimator".into()));
    }
    // Normalize each weight family by its own maximum; the Hellinger ratio
    // is invariant under separate rescalings of the two families.
    let nf = n_samples as f64;
    let mean_a: f64 = phi_a.iter().map(|&p| (-(p - shift_a)).exp()).sum::<f64>() / nf;
    let mean_b: f64 = phi_b.iter().map(|&p| (-(p - shift_b)).exp()).sum::<f64>() / nf;
    let mean_geo: f64 = phi_a
        .iter()
        .zip(&phi_b)
        .map(|(&pa, &pb)| (-(0.5 * (pa + pb) - 0.5 * (shift_a + shift_b))).exp())
        .sum::<f64>()
        / nf;
    if mean_a <= 0.0 || mean_b <= 0.0 {
        return Err(Error::IllConditioned(
            "all importance weights underflowed to zero".into(),
        ));
    }
    let ratio = mean_geo / (mean_a * mean_b).sqrt();
    if !ratio.is_finite() {
        return Err(Error::IllConditioned(format!(
            "Hellinger affinity ratio is not finite ({ratio})"
        )));
    }
    let dsq = (1.0 - ratio).clamp(0.0, 1.0);
    Ok(dsq.sqrt())
}
