//! Monte Carlo check of the score and Fisher-information identities.

use nalgebra::DMatrix;

use super::fd;
use crate::error::{EmError, Result};
use crate::models::SimulableModel;
use crate::params::ParamVec;
use crate::rng::{Purpose, RngStream};

#[derive(Debug, Clone)]
pub struct FisherReport {
    pub names: Vec<String>,
    pub n_mc: usize,
    /// Mean of the score `∂L/∂θ` over simulated datasets.
    pub score_mean: Vec<f64>,
    pub score_se: Vec<f64>,
    /// Empirical covariance of the score.
    pub score_cov: DMatrix<f64>,
    pub score_cov_se: DMatrix<f64>,
    /// Mean of `−∂²L/∂θ²`.
    pub neg_hessian_mean: DMatrix<f64>,
    pub neg_hessian_se: DMatrix<f64>,
}

impl FisherReport {
    /// Largest `|mean score| / se` over coordinates.
    pub fn score_z_max(&self) -> f64 {
        self.score_mean.iter().zip(&self.score_se).map(|(m, s)| m.abs() / s).fold(0.0, f64::max)
    }

    /// Largest `|cov(S, S) − E(−∂S/∂θ)|` in units of its combined standard error.
    pub fn identity_z_max(&self) -> f64 {
        let mut z: f64 = 0.0;
        for i in 0..self.score_cov.len() {
            let se = self.score_cov_se[i].hypot(self.neg_hessian_se[i]);
            let gap = (self.score_cov[i] - self.neg_hessian_mean[i]).abs();
            z = z.max(if se > 0.0 {
                gap / se
            } else if gap == 0.0 {
                0.0
            } else {
                f64::INFINITY
            });
        }
        z
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Simulates `n_mc` datasets from `p(y | θ)` (dataset `j` on the simulation
/// substream `j`) and collects the finite-difference score and Hessian of
/// `L` in free coordinates at `θ`.
pub fn score_and_fisher<M: SimulableModel>(
    model: &M,
    theta: &ParamVec,
    seed: u64,
    n_mc: usize,
) -> Result<FisherReport> {
    model.check(theta)?;
    if n_mc < 2 {
        return Err(EmError::Config("n_mc must be at least 2".into()));
    }
    let stream = RngStream::new(seed);
    let v = model.to_free(theta);
    let d = v.len();
    let mut scores = Vec::with_capacity(n_mc);
    let mut hessians = Vec::with_capacity(n_mc);
    for j in 0..n_mc {
        let mut rng = stream.substream(Purpose::Simulation, j as u64);
        let sim = model.resimulate(theta, &mut rng);
        let f = |x: &[f64]| sim.log_lik_or_neg_inf(&sim.from_free(x));
        scores.push(fd::gradient(&f, &v));
        hessians.push(-fd::hessian(&f, &v));
    }

    let mut score_mean = vec![0.0; d];
    let mut score_se = vec![0.0; d];
    for a in 0..d {
        let col: Vec<f64> = scores.iter().map(|s| s[a]).collect();
        (score_mean[a], score_se[a]) = mean_and_se(&col);
    }
    let mut score_cov = DMatrix::zeros(d, d);
    let mut score_cov_se = DMatrix::zeros(d, d);
    let mut neg_hessian_mean = DMatrix::zeros(d, d);
    let mut neg_hessian_se = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let prods: Vec<f64> = scores.iter().map(|s| (s[a] - score_mean[a]) * (s[b] - score_mean[b])).collect();
            let (m, se) = mean_and_se(&prods);
            score_cov[(a, b)] = m * n_mc as f64 / (n_mc as f64 - 1.0);
            score_cov_se[(a, b)] = se;
            let hs: Vec<f64> = hessians.iter().map(|h| h[(a, b)]).collect();
            (neg_hessian_mean[(a, b)], neg_hessian_se[(a, b)]) = mean_and_se(&hs);
        }
    }
    Ok(FisherReport {
        names: model.free_names(),
        n_mc,
        score_mean,
        score_se,
        score_cov,
        score_cov_se,
        neg_hessian_mean,
        neg_hessian_se,
    })
}
