//! Shared fixtures for unit tests.

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::{Field, FieldRole};
use crate::graph::MetricGraph;
use crate::mesh::Mesh;

pub(crate) fn interval(length: f64) -> Arc<MetricGraph> {
    Arc::new(
        MetricGraph::new(
            vec![("a".into(), 0.0, 0.0), ("b".into(), length, 0.0)],
            vec![("e".into(), "a".into(), "b".into(), None)],
        )
        .unwrap(),
    )
}

pub(crate) fn star3() -> Arc<MetricGraph> {
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

pub(crate) fn random_field(mesh: &Arc<Mesh>, seed: u64, scale: f64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = DVector::from_fn(mesh.n_dof(), |_, _| scale * (rng.random::<f64>() - 0.5));
    Field::new(mesh.clone(), v, FieldRole::Parameter).unwrap()
}
