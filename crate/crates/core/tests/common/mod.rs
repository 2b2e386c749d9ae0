//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use emkit::fit::StopMode;
use emkit::{run_fit, FitTrace, GaussianMixture, LatentModel, ParamVec, StoppingRule, VariantConfig};

pub fn d1() -> GaussianMixture {
    GaussianMixture::new(emkit::fixtures::d1(), 2).unwrap()
}

/// A start in the basin of the symmetric optimum of D1, away from symmetry.
pub fn d1_theta0(m: &GaussianMixture) -> ParamVec {
    m.params(&[0.4, 0.6], &[-3.0, 2.0], &[2.0, 2.0]).unwrap()
}

pub fn normal_pdf(y: f64, mu: f64, var: f64) -> f64 {
    (-(y - mu) * (y - mu) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// `Σ_i log Σ_k π_k N(y_i; μ_k, σ²_k)` evaluated directly.
pub fn gmm_loglik(y: &[f64], w: &[f64], mu: &[f64], var: &[f64]) -> f64 {
    y.iter().map(|&x| (0..w.len()).map(|k| w[k] * normal_pdf(x, mu[k], var[k])).sum::<f64>().ln()).sum()
}

/// Every label vector in `{0..k}^n`, in lexicographic order.
pub fn all_labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(k.pow(n as u32));
    let mut z = vec![0usize; n];
    loop {
        out.push(z.clone());
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            z[i] += 1;
            if z[i] < k {
                break;
            }
            z[i] = 0;
        }
    }
}

/// Complete-data density `p(z, y | θ)` from the model's own component densities.
pub fn joint_density(m: &dyn LatentModel, theta: &ParamVec, z: &[usize]) -> f64 {
    let w = m.weights(theta);
    z.iter().enumerate().map(|(i, &k)| w[k] * m.log_component_density(theta, i, k).exp()).product()
}

/// One textbook k-means iteration: nearest centroid (ties to the lower index), then means.
pub fn kmeans_step(y: &[f64], centroids: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let assign: Vec<usize> = y
        .iter()
        .map(|&x| {
            let mut best = 0;
            for k in 1..centroids.len() {
                if (x - centroids[k]).abs() < (x - centroids[best]).abs() {
                    best = k;
                }
            }
            best
        })
        .collect();
    let next = (0..centroids.len())
        .map(|k| {
            let pts: Vec<f64> = y.iter().zip(&assign).filter(|(_, &a)| a == k).map(|(&x, _)| x).collect();
            pts.iter().sum::<f64>() / pts.len() as f64
        })
        .collect();
    (assign, next)
}

pub fn stop_all(max_iters: usize, tol: f64) -> StoppingRule {
    StoppingRule { max_iters, tol_param: tol, tol_loglik: tol, mode: StopMode::AllOf }
}

pub fn fit(m: &dyn LatentModel, cfg: VariantConfig, theta0: &ParamVec, stop: StoppingRule, seed: u64) -> FitTrace {
    run_fit(m, &cfg, theta0, &stop, seed).unwrap()
}

/// Iterates and log-likelihoods agree bit for bit (variant tags and annotations may differ).
pub fn same_iterates(a: &FitTrace, b: &FitTrace) -> bool {
    a.status == b.status
        && a.records.len() == b.records.len()
        && a.thetas().zip(b.thetas()).all(|(x, y)| x == y)
        && a.logliks().iter().zip(b.logliks()).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Largest relative decrease along a sequence.
pub fn worst_drop(xs: &[f64]) -> f64 {
    xs.windows(2).map(|w| (w[0] - w[1]) / w[0].abs().max(1e-300)).fold(0.0, f64::max)
}

/// `‖em_map(θ) − θ‖_∞`.
pub fn residual(m: &dyn LatentModel, theta: &ParamVec) -> f64 {
    emkit::em_map(m, theta).unwrap().sup_dist(theta)
}
