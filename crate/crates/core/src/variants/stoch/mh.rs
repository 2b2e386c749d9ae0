//! Single-site Metropolis–Hastings kernel on the labels, targeting `p(z | y, θ)`.

use rand::{Rng, RngCore};

use crate::model::LatentModel;
use crate::params::ParamVec;

/// Consecutive rejections after which SAEM2 annotates its trace.
pub const MH_REJECTION_WARNING: u64 = 10_000;

/// One proposal: pick an item and a label uniformly, accept with probability
/// `min(1, π_k f_k(y_i) / π_{z_i} f_{z_i}(y_i))`. The proposal is symmetric,
/// so the chain is reversible with respect to the posterior.
///
/// Returns whether the proposal was accepted (a proposal of the current label counts as accepted).
pub fn mh_step(model: &dyn LatentModel, theta: &ParamVec, labels: &mut [usize], rng: &mut dyn RngCore) -> bool {
    let i = rng.random_range(0..labels.len());
    let k = rng.random_range(0..model.n_components());
    let cur = labels[i];
    if k == cur {
        return true;
    }
    let w = model.weights(theta);
    let log_ratio =
        w[k].ln() + model.log_component_density(theta, i, k) - w[cur].ln() - model.log_component_density(theta, i, cur);
    let u: f64 = rng.random();
    if log_ratio >= 0.0 || u.ln() < log_ratio {
        labels[i] = k;
        true
    } else {
        false
    }
}
