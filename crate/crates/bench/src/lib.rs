//! Shared fixtures for the criterion benchmarks: representative models at
//! sizes where the measured kernels dominate the run time.

use mjp_core::models::{bd_stationary, BirthDeathModel};
use mjp_core::{EdgeField, Perturbation, RateMatrix, StationaryChain, TimeProfile, TorusModel};

/// Random-conductance torus: reversible, dense enough to exercise the
/// complex solves. `side^d` states.
pub fn conductance_torus(d: usize, side: usize) -> TorusModel {
    TorusModel::conductances(d, side, 1.0, 424242).expect("valid benchmark torus")
}

/// The alternating-rate ring used throughout the tests.
pub fn two_periodic_ring(side: usize) -> TorusModel {
    TorusModel::two_periodic(side, (2.0, 1.0), (1.0, 3.0)).expect("valid benchmark ring")
}

/// Birth-death chain with constant birth 1 and linear death, truncated at
/// `k`. The stationary tail underflows a numeric solve long before `k = 50`,
/// so the chain is assembled from the closed-form product weights.
pub fn birth_death_chain(k: usize) -> (BirthDeathModel, StationaryChain) {
    let model =
        BirthDeathModel::new(k, |_| 1.0, |j| 2.0 * j as f64).expect("valid benchmark chain");
    let rates = model.rate_matrix().expect("valid rates");
    let pi = bd_stationary(&model).pi;
    let chain = StationaryChain::with_known_pi(rates, pi).expect("balanced");
    (model, chain)
}

/// Constant-in-time unit tilt on every up edge of a kernel.
pub fn up_edge_tilt(rates: &RateMatrix) -> Perturbation {
    let mut field = Vec::new();
    for x in 0..rates.len() {
        for &(y, _) in rates.edges_from(x) {
            if y > x {
                field.push((x, y, 1.0));
            }
        }
    }
    Perturbation::Decoupled {
        profile: TimeProfile::Constant(1.0),
        field: EdgeField::from_triples(rates.len(), &field).expect("valid field"),
    }
}
