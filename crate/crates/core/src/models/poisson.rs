//! K-component Poisson mixture over nonnegative counts.

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::factorial::ln_factorial;

use crate::error::{EmError, Result};
use crate::model::{LatentModel, SufficientStats, DISPERSION_FLOOR, MASS_FLOOR};
use crate::params::{BlockLayout, ParamVec};

use super::{draw_dirichlet_weights, normalize_weights, SimulableModel};

/// Parameters are `[π_1 … π_K, λ_1 … λ_K]`; blocks `weights`, `comp1`, …, `compK`.
#[derive(Debug, Clone)]
pub struct PoissonMixture {
    counts: Vec<u64>,
    ln_fact: Vec<f64>,
    k: usize,
    layout: Arc<BlockLayout>,
}

impl PoissonMixture {
    pub fn new(counts: Vec<u64>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(EmError::Config("component count must be at least 1".into()));
        }
        if counts.is_empty() {
            return Err(EmError::Data("no observations".into()));
        }
        let mut spec = vec![("weights".to_string(), (1..=k).map(|j| format!("pi{j}")).collect())];
        for j in 1..=k {
            spec.push((format!("comp{j}"), vec!["lambda".to_string()]));
        }
        let layout = Arc::new(BlockLayout::new(spec)?);
        let ln_fact = counts.iter().map(|&c| ln_factorial(c)).collect();
        Ok(Self { counts, ln_fact, k, layout })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn params(&self, weights: &[f64], rates: &[f64]) -> Result<ParamVec> {
        if weights.len() != self.k || rates.len() != self.k {
            return Err(EmError::InvalidParam(format!("expected {} values per slice", self.k)));
        }
        let v = weights.iter().chain(rates).copied().collect();
        ParamVec::new(v, Arc::clone(&self.layout))
    }

    pub fn rate(&self, theta: &ParamVec, k: usize) -> f64 {
        theta.values()[self.k + k]
    }
}

impl LatentModel for PoissonMixture {
    fn family(&self) -> &'static str {
        "poisson"
    }

    fn n_items(&self) -> usize {
        self.counts.len()
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
            let l = self.rate(theta, j);
            if !(l >= DISPERSION_FLOOR) {
                return Err(EmError::InvalidParam(format!("rate {} = {l}", j + 1)));
            }
        }
        Ok(())
    }

    fn log_component_density(&self, theta: &ParamVec, item: usize, k: usize) -> f64 {
        let l = self.rate(theta, k);
        self.counts[item] as f64 * l.ln() - l - self.ln_fact[item]
    }

    fn n_features(&self) -> usize {
        3
    }

    fn item_features(&self, item: usize, out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = self.counts[item] as f64;
        out[2] = self.ln_fact[item];
    }

    fn m_step(&self, stats: &SufficientStats) -> Result<ParamVec> {
        let n = self.counts.len() as f64;
        let total = stats.total_mass();
        let mut values: Vec<f64> = (0..self.k).map(|j| stats.mass(j) / total).collect();
        normalize_weights(&mut values);
        for j in 0..self.k {
            let m = stats.mass(j);
            if !(m >= MASS_FLOOR * n) {
                return Err(EmError::Degenerate { component: j + 1, reason: format!("responsibility mass {m:e}") });
            }
            let rate = stats.sum(j, 1) / m;
            if !(rate >= DISPERSION_FLOOR) {
                return Err(EmError::Degenerate { component: j + 1, reason: format!("rate {rate:e}") });
            }
            values.push(rate);
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
                let l = self.rate(theta, j);
                stats.sum(j, 1) * l.ln() - m * l - stats.sum(j, 2)
            })
            .sum()
    }

    fn coordinate_maximizer(&self, stats: &SufficientStats, _theta: &ParamVec, coord: usize) -> f64 {
        assert!(coord >= self.k, "weights are handled generically");
        let j = coord - self.k;
        stats.sum(j, 1) / stats.mass(j)
    }

    /// Flat priors on the simplex and on each rate: `λ_k | z ~ Gamma(Σy + 1, n_k)`.
    fn draw_complete_posterior(
        &self,
        labels: &[usize],
        _current: &ParamVec,
        rng: &mut dyn RngCore,
    ) -> Result<ParamVec> {
        let mut counts = vec![0usize; self.k];
        let mut sums = vec![0.0; self.k];
        for (&z, &y) in labels.iter().zip(&self.counts) {
            counts[z] += 1;
            sums[z] += y as f64;
        }
        if let Some(j) = counts.iter().position(|&c| c == 0) {
            return Err(EmError::Degenerate { component: j + 1, reason: "empty class".into() });
        }
        let mut values = draw_dirichlet_weights(&counts, rng);
        for j in 0..self.k {
            let g = Gamma::new(sums[j] + 1.0, 1.0 / counts[j] as f64)
                .map_err(|e| EmError::NonFinite(e.to_string()))?
                .sample(rng);
            if !(g >= DISPERSION_FLOOR) {
                return Err(EmError::Degenerate { component: j + 1, reason: format!("rate draw {g:e}") });
            }
            values.push(g);
        }
        ParamVec::new(values, Arc::clone(&self.layout))
    }
}

impl SimulableModel for PoissonMixture {
    fn resimulate(&self, theta: &ParamVec, rng: &mut dyn RngCore) -> Self {
        let w = self.weights(theta).to_vec();
        let counts = (0..self.counts.len())
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
                Poisson::new(self.rate(theta, k)).expect("positive rate").sample(rng) as u64
            })
            .collect();
        Self::new(counts, self.k).expect("non-empty")
    }
}
