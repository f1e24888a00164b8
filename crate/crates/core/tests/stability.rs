//! Empirical counterparts of the forward-map and spectrum stability
//! bounds: each diagnostic ratio must stay below a frozen regression
//! constant measured once on this code path.

use std::sync::Arc;

use graphinf::{
    all_dof_points, assemble_stiffness, build_mesh, eigen_perturbation_check, eigendecompose,
    observe, solve_elliptic, solve_fractional, Field, FieldRole, Functional, Mesh, MetricGraph,
    ObservationSet,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn interval() -> Arc<MetricGraph> {
    Arc::new(
        MetricGraph::new(
            vec![("a".into(), 0.0, 0.0), ("b".into(), 1.0, 0.0)],
            vec![("e".into(), "a".into(), "b".into(), None)],
        )
        .unwrap(),
    )
}

fn star3() -> Arc<MetricGraph> {
    Arc::new(
        MetricGraph::new(
            vec![
                ("c".into(), 0.0, 0.0),
                ("l0".into(), 1.0, 0.0),
                ("l1".into(), -0.5, 0.86602540378443865),
                ("l2".into(), -0.5, -0.86602540378443865),
            ],
            vec![
                ("e0".into(), "c".into(), "l0".into(), Some(1.0)),
                ("e1".into(), "c".into(), "l1".into(), Some(1.0)),
                ("e2".into(), "c".into(), "l2".into(), Some(1.0)),
            ],
        )
        .unwrap(),
    )
}

fn random_field(mesh: &Arc<Mesh>, seed: u64, scale: f64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = DVector::from_fn(mesh.n_dof(), |_, _| scale * (rng.random::<f64>() - 0.5));
    Field::new(mesh.clone(), v, FieldRole::Parameter).unwrap()
}

/// Discrete H1 norm `sqrt(p' (K0 + M) p)` with `K0` the stiffness at u = 0.
fn h1_norm(mesh: &Arc<Mesh>, kappa: f64, p: &Field) -> f64 {
    let zero = Field::zeros(mesh.clone(), FieldRole::Parameter);
    let op0 = assemble_stiffness(mesh, &zero, kappa).unwrap();
    (op0.stiffness.quadratic(p.values()) + op0.mass.quadratic(p.values()))
        .max(0.0)
        .sqrt()
}

fn l2_norm(mesh: &Arc<Mesh>, f: &Field) -> f64 {
    let zero = Field::zeros(mesh.clone(), FieldRole::Parameter);
    assemble_stiffness(mesh, &zero, 1.0).unwrap().mass.norm(f.values())
}

#[test]
fn monotone_stability_over_constant_fields() {
    // |p|_H1 / (e^{|u|_inf} |f|_L2) stays bounded over constant u in [-2, 2].
    let mesh = build_mesh(&star3(), 0.05).unwrap();
    let f = Field::from_coords(mesh.clone(), FieldRole::Source, |x, y| x * x - y * y).unwrap();
    let fnorm = l2_norm(&mesh, &f);
    let mut worst: f64 = 0.0;
    for k in 0..=20 {
        let c = -2.0 + 4.0 * k as f64 / 20.0;
        let u = Field::constant(mesh.clone(), c, FieldRole::Parameter).unwrap();
        let op = assemble_stiffness(&mesh, &u, 1.0).unwrap();
        let p = solve_elliptic(&op, &f).unwrap();
        let ratio = h1_norm(&mesh, 1.0, &p) / (c.abs().exp() * fnorm);
        worst = worst.max(ratio);
    }
    println!("monotone stability worst ratio: {worst}");
    // frozen regression bound (measured 0.5726)
    assert!(worst <= 0.7, "ratio {worst}");
}

#[test]
fn forward_map_lipschitz_constant_stable_across_meshes() {
    // Calibrate C on the smallest mesh, then hold it fixed under refinement.
    let kappa = 1.0;
    let ratio_for = |mesh: &Arc<Mesh>, seed: u64| {
        let f = Field::from_coords(mesh.clone(), FieldRole::Source, |x, y| x * x - y * y).unwrap();
        let fnorm = l2_norm(mesh, &f);
        let u1 = random_field(mesh, seed, 2.0);
        let u2 = random_field(mesh, seed + 1000, 2.0);
        let p1 = solve_elliptic(&assemble_stiffness(mesh, &u1, kappa).unwrap(), &f).unwrap();
        let p2 = solve_elliptic(&assemble_stiffness(mesh, &u2, kappa).unwrap(), &f).unwrap();
        let diff = Field::new(mesh.clone(), p1.values() - p2.values(), FieldRole::Solution).unwrap();
        let num = h1_norm(mesh, kappa, &diff);
        let m = u1.linf().max(u2.linf());
        let du = (u1.values() - u2.values()).amax();
        num / ((3.0 * m).exp() * du * fnorm)
    };

    let coarse = build_mesh(&interval(), 0.25).unwrap();
    let mut calibrated: f64 = 0.0;
    for seed in 0..30 {
        calibrated = calibrated.max(ratio_for(&coarse, seed));
    }
    let c = calibrated * 1.2;
    println!("calibrated Lipschitz constant: {calibrated} (bound {c})");

    for h in [0.125, 0.0625, 0.03125] {
        let mesh = build_mesh(&interval(), h).unwrap();
        for seed in 100..120 {
            let r = ratio_for(&mesh, seed);
            assert!(r <= c, "h={h} seed={seed}: ratio {r} exceeds {c}");
        }
    }
}

#[test]
fn forward_model_lipschitz_regression() {
    // |G(u1) - G(u2)| / (e^{(beta+2) max|u|} |u1 - u2|_inf) over 200 trials.
    let mesh = build_mesh(&star3(), 0.1).unwrap();
    let f = Field::from_coords(mesh.clone(), FieldRole::Source, |x, y| x * x - y * y).unwrap();
    let spec = graphinf::ForwardSpec::new(mesh.clone(), 1.0, 1.0, f).unwrap();
    let functionals: Vec<Functional> = all_dof_points(&mesh)
        .into_iter()
        .map(Functional::Point)
        .collect();
    let m = functionals.len();
    let obs = ObservationSet::new(
        functionals,
        DVector::zeros(m),
        DVector::from_element(m, 1.0),
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let u1 = random_field(&mesh, 2 * trial, 2.0);
        let u2 = random_field(&mesh, 2 * trial + 1, 2.0);
        let g1 = observe(&spec.forward_map(&u1).unwrap(), &obs).unwrap();
        let g2 = observe(&spec.forward_map(&u2).unwrap(), &obs).unwrap();
        let num = (g1 - g2).norm();
        let scale = ((1.0 + 2.0) * u1.linf().max(u2.linf())).exp()
            * (u1.values() - u2.values()).amax();
        worst = worst.max(num / scale);
    }
    println!("forward model Lipschitz worst ratio: {worst}");
    // frozen regression bound (measured 0.00800)
    assert!(worst <= 0.012, "ratio {worst}");
}

#[test]
fn eigenvalue_perturbation_regression() {
    // 100 random pairs on the 3-star at s = 3/2.
    let mesh = build_mesh(&star3(), 0.2).unwrap();
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let u1 = random_field(&mesh, 3 * trial + 7, 2.0);
        let u2 = random_field(&mesh, 3 * trial + 8, 2.0);
        let op1 = assemble_stiffness(&mesh, &u1, 1.0).unwrap();
        let op2 = assemble_stiffness(&mesh, &u2, 1.0).unwrap();
        let c = eigen_perturbation_check(&op1, &op2, &u1, &u2, 1.5).unwrap();
        worst = worst.max(c);
    }
    println!("eigenvalue perturbation worst constant: {worst}");
    // frozen regression bound (measured 0.00300)
    assert!(worst.is_finite() && worst <= 0.0045, "constant {worst}");
}

#[test]
fn fractional_stability_constant_decreases_in_beta() {
    // c(beta) = max over constant u of |p|_H1 / (e^{beta |u|} |f|_L2) is
    // non-increasing along the sampled beta grid.
    let mesh = build_mesh(&star3(), 0.1).unwrap();
    let f = Field::from_coords(mesh.clone(), FieldRole::Source, |x, y| x * x - y * y).unwrap();
    let fnorm = l2_norm(&mesh, &f);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let us: Vec<f64> = (0..12).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let mut prev = f64::INFINITY;
    for beta in [1.0, 1.25, 1.5, 2.0] {
        let mut c_beta: f64 = 0.0;
        for &c in &us {
            let u = Field::constant(mesh.clone(), c, FieldRole::Parameter).unwrap();
            let op = assemble_stiffness(&mesh, &u, 1.0).unwrap();
            let basis = eigendecompose(&op).unwrap();
            let p = solve_fractional(&basis, &f, beta).unwrap();
            let ratio = h1_norm(&mesh, 1.0, &p) / ((beta * c.abs()).exp() * fnorm);
            c_beta = c_beta.max(ratio);
        }
        println!("c({beta}) = {c_beta}");
        assert!(c_beta <= prev * (1.0 + 1e-9), "c({beta}) = {c_beta} > {prev}");
        prev = c_beta;
    }
}
