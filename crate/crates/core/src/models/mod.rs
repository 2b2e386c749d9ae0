//! Concrete mixture models.

mod gaussian;
mod poisson;

pub use gaussian::{GaussianMixture, VARIANCE_PRIOR_SCALE_FRACTION, VARIANCE_PRIOR_SHAPE};
pub use poisson::PoissonMixture;

pub(crate) use gaussian::normal_logpdf;

use rand::RngCore;
use rand_distr::{Distribution, Gamma};

use crate::model::LatentModel;
use crate::params::ParamVec;

/// Models that can draw a fresh dataset of the same size from `p(y | θ)`.
pub trait SimulableModel: LatentModel + Sized {
    fn resimulate(&self, theta: &ParamVec, rng: &mut dyn RngCore) -> Self;
}

/// Divides by the sum so the weights add up to one after rounding.
pub(crate) fn normalize_weights(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
}

/// `Dirichlet(counts + 1)`, the weights posterior under a flat prior on the simplex.
pub(crate) fn draw_dirichlet_weights(counts: &[usize], rng: &mut dyn RngCore) -> Vec<f64> {
    let mut w: Vec<f64> =
        counts.iter().map(|&c| Gamma::new(c as f64 + 1.0, 1.0).expect("positive shape").sample(rng)).collect();
    normalize_weights(&mut w);
    w
}
