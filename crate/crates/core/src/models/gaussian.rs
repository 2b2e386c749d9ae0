//! Univariate K-component Gaussian mixture.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{EmError, Result};
use crate::model::{LatentModel, SufficientStats, DISPERSION_FLOOR, MASS_FLOOR};
use crate::params::{BlockLayout, ParamVec};
use crate::variants::px::{ExpandedModel, ExpansionKind, ScaleExpansion};

use super::{draw_dirichlet_weights, normalize_weights, SimulableModel};

/// Shape `a` of the inverse-gamma prior `p(σ²) ∝ (σ²)^{-(1+a)} exp(−b/σ²)` used by
/// data augmentation.
pub const VARIANCE_PRIOR_SHAPE: f64 = 1.0;
/// Prior scale `b` as a fraction of the sample variance. Without it a class
/// holding a single item has an improper posterior and the chain drifts to `σ² → 0`.
pub const VARIANCE_PRIOR_SCALE_FRACTION: f64 = 0.01;

/// Parameters are laid out as `[π_1 … π_K, μ_1, σ²_1, …, μ_K, σ²_K]` with
/// blocks `weights`, `comp1`, …, `compK`.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    data: Vec<f64>,
    k: usize,
    // features are taken relative to the data mean to limit cancellation in σ²
    center: f64,
    prior_scale: f64,
    layout: Arc<BlockLayout>,
}

impl GaussianMixture {
    pub fn new(data: Vec<f64>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(EmError::Config("component count must be at least 1".into()));
        }
        if data.is_empty() {
            return Err(EmError::Data("no observations".into()));
        }
        if let Some(i) = data.iter().position(|y| !y.is_finite()) {
            return Err(EmError::Data(format!("observation {} is not finite", i + 1)));
        }
        let center = data.iter().sum::<f64>() / data.len() as f64;
        let spread = data.iter().map(|y| (y - center).powi(2)).sum::<f64>() / data.len() as f64;
        let prior_scale = VARIANCE_PRIOR_SCALE_FRACTION * if spread > 0.0 { spread } else { 1.0 };
        Ok(Self { layout: Arc::new(Self::build_layout(k)), data, k, center, prior_scale })
    }

    fn build_layout(k: usize) -> BlockLayout {
        let mut spec = vec![("weights".to_string(), (1..=k).map(|j| format!("pi{j}")).collect())];
        for j in 1..=k {
            spec.push((format!("comp{j}"), vec!["mu".to_string(), "var".to_string()]));
        }
        BlockLayout::new(spec).expect("static layout")
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Scale `b` of the variance prior used by data augmentation.
    pub fn variance_prior_scale(&self) -> f64 {
        self.prior_scale
    }

    /// Assembles a parameter vector from per-component slices.
    pub fn params(&self, weights: &[f64], means: &[f64], variances: &[f64]) -> Result<ParamVec> {
        if weights.len() != self.k || means.len() != self.k || variances.len() != self.k {
            return Err(EmError::InvalidParam(format!("expected {} values per slice", self.k)));
        }
        let mut v = weights.to_vec();
        for j in 0..self.k {
            v.push(means[j]);
            v.push(variances[j]);
        }
        ParamVec::new(v, Arc::clone(&self.layout))
    }

    pub fn mean(&self, theta: &ParamVec, k: usize) -> f64 {
        theta.values()[self.k + 2 * k]
    }

    pub fn variance(&self, theta: &ParamVec, k: usize) -> f64 {
        theta.values()[self.k + 2 * k + 1]
    }

    pub fn means(&self, theta: &ParamVec) -> Vec<f64> {
        (0..self.k).map(|j| self.mean(theta, j)).collect()
    }

    pub(crate) fn k(&self) -> usize {
        self.k
    }
}

pub(crate) fn normal_logpdf(y: f64, mu: f64, var: f64) -> f64 {
    let d = y - mu;
    -0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var)
}

impl LatentModel for GaussianMixture {
    fn family(&self) -> &'static str {
        "gaussian"
    }

    fn n_items(&self) -> usize {
        self.data.len()
    }

    fn n_components(&self) -> usize {
        self.k
    }

    fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    fn check(&self, theta: &ParamVec) -> Result<()> {
        self.check_weights(theta)?;
        for j in 0..self.k {
            let var = self.variance(theta, j);
            if !(var >= DISPERSION_FLOOR) {
                return Err(EmError::InvalidParam(format!("variance {} = {var}", j + 1)));
            }
        }
        Ok(())
    }

    fn log_component_density(&self, theta: &ParamVec, item: usize, k: usize) -> f64 {
        normal_logpdf(self.data[item], self.mean(theta, k), self.variance(theta, k))
    }

    fn n_features(&self) -> usize {
        3
    }

    fn item_features(&self, item: usize, out: &mut [f64]) {
        let d = self.data[item] - self.center;
        out[0] = 1.0;
        out[1] = d;
        out[2] = d * d;
    }

    fn m_step(&self, stats: &SufficientStats) -> Result<ParamVec> {
        let n = self.data.len() as f64;
        let total = stats.total_mass();
        let mut values = Vec::with_capacity(3 * self.k);
        for j in 0..self.k {
            values.push(stats.mass(j) / total);
        }
        normalize_weights(&mut values);
        for j in 0..self.k {
            let m = stats.mass(j);
            if !(m >= MASS_FLOOR * n) {
                return Err(EmError::Degenerate { component: j + 1, reason: format!("responsibility mass {m:e}") });
            }
            let shift = stats.sum(j, 1) / m;
            let var = stats.sum(j, 2) / m - shift * shift;
            if !(var >= DISPERSION_FLOOR) {
                return Err(EmError::Degenerate { component: j + 1, reason: format!("variance {var:e}") });
            }
            values.push(self.center + shift);
            values.push(var);
        }
        ParamVec::new(values, Arc::clone(&self.layout))
    }

    fn expected_component_loglik(&self, stats: &SufficientStats, theta: &ParamVec) -> f64 {
        (0..self.k)
            .map(|j| {
                let m = stats.mass(j);
                if m == 0.0 {
                    return 0.0;
                }
                let var = self.variance(theta, j);
                let d = self.mean(theta, j) - self.center;
                let sq = stats.sum(j, 2) - 2.0 * d * stats.sum(j, 1) + d * d * m;
                -0.5 * m * (2.0 * PI * var).ln() - sq / (2.0 * var)
            })
            .sum()
    }

    fn coordinate_maximizer(&self, stats: &SufficientStats, theta: &ParamVec, coord: usize) -> f64 {
        assert!(coord >= self.k, "weights are handled generically");
        let j = (coord - self.k) / 2;
        let m = stats.mass(j);
        if (coord - self.k).is_multiple_of(2) {
            self.center + stats.sum(j, 1) / m
        } else {
            let d = self.mean(theta, j) - self.center;
            (stats.sum(j, 2) - 2.0 * d * stats.sum(j, 1) + d * d * m) / m
        }
    }

    fn dispersion_coords(&self) -> Vec<usize> {
        (0..self.k).map(|j| self.k + 2 * j + 1).collect()
    }

    /// Flat prior on the weights simplex and on each mean; inverse-gamma prior on each variance.
    /// One Gibbs sweep: weights, then `μ_k | σ²_k`, then `σ²_k | μ_k`.
    fn draw_complete_posterior(&self, labels: &[usize], current: &ParamVec, rng: &mut dyn RngCore) -> Result<ParamVec> {
        let mut counts = vec![0usize; self.k];
        let mut sums = vec![0.0; self.k];
        for (&z, &y) in labels.iter().zip(&self.data) {
            counts[z] += 1;
            sums[z] += y;
        }
        if let Some(j) = counts.iter().position(|&c| c == 0) {
            return Err(EmError::Degenerate { component: j + 1, reason: "empty class".into() });
        }
        let mut values = draw_dirichlet_weights(&counts, rng);
        for j in 0..self.k {
            let nj = counts[j] as f64;
            let ybar = sums[j] / nj;
            let sd = (self.variance(current, j) / nj).sqrt();
            let mu = Normal::new(ybar, sd).map_err(|e| EmError::NonFinite(e.to_string()))?.sample(rng);
            let ss: f64 =
                labels.iter().zip(&self.data).filter(|(&z, _)| z == j).map(|(_, &y)| (y - mu) * (y - mu)).sum();
            let g = Gamma::new(VARIANCE_PRIOR_SHAPE + 0.5 * nj, 1.0)
                .map_err(|e| EmError::NonFinite(e.to_string()))?
                .sample(rng);
            let var = (self.prior_scale + 0.5 * ss) / g;
            if !(var >= DISPERSION_FLOOR) {
                return Err(EmError::Degenerate { component: j + 1, reason: format!("variance draw {var:e}") });
            }
            values.push(mu);
            values.push(var);
        }
        ParamVec::new(values, Arc::clone(&self.layout))
    }

    fn px_expansion(&self, kind: ExpansionKind) -> Option<Box<dyn ExpandedModel + '_>> {
        match kind {
            ExpansionKind::Null => None,
            ExpansionKind::Scale => Some(Box::new(ScaleExpansion::new(self))),
        }
    }
}

impl SimulableModel for GaussianMixture {
    fn resimulate(&self, theta: &ParamVec, rng: &mut dyn RngCore) -> Self {
        let w = self.weights(theta).to_vec();
        let data = (0..self.data.len())
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = self.k - 1;
                for (j, &p) in w.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        k = j;
                        break;
                    }
                }
                let z: f64 = rand_distr::StandardNormal.sample(rng);
                self.mean(theta, k) + self.variance(theta, k).sqrt() * z
            })
            .collect();
        Self::new(data, self.k).expect("finite simulated data")
    }
}
