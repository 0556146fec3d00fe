//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use penfem::solver::{BoundaryKind, Discretization};
use penfem::ElementPair;

/// Discretization with a smooth swirling velocity to convect with.
pub fn fixture(level: u32, pair: ElementPair) -> (Arc<Discretization>, Vec<f64>) {
    let disc = Arc::new(Discretization::new(level, pair, BoundaryKind::NoSlip).expect("valid level"));
    let w = disc
        .velocity
        .interpolate_vector(|x, y| [x * (1.0 - x) * (1.0 - 2.0 * y), -y * (1.0 - y) * (1.0 - 2.0 * x)])
        .expect("vector space");
    (disc, w)
}
