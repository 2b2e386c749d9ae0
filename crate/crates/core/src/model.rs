//! The latent-variable model contract and the E-step output it produces.
//!
//! Every model in this crate is a finite mixture: the latent variable of item
//! `i` is a component label `z_i ∈ {0, …, K−1}` and the complete-data density
//! factors as `p(z, y | θ) = Π_i π_{z_i} f_{z_i}(y_i | θ)`. The first `K`
//! coordinates of every parameter vector are the mixing weights.
//!
//! Sufficient statistics are per-component sums of per-item feature vectors
//! weighted by responsibilities. Feature 0 is always the constant 1, so the
//! first sum of a component is its responsibility mass.

use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::error::{EmError, Result};
use crate::params::{BlockLayout, ParamVec};
use crate::variants::px::{ExpandedModel, ExpansionKind};

/// Hard assignment of every item to a component.
pub type Labels = Vec<usize>;

/// Mass below `MASS_FLOOR · n_items` marks a component as degenerate.
pub const MASS_FLOOR: f64 = 1e-8;
/// Dispersion parameters (variances, rates) below this value are degenerate.
pub const DISPERSION_FLOOR: f64 = 1e-10;
/// Tolerance on `Σπ = 1` accepted by `check`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Row-stochastic `n × K` matrix of posterior label probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n_items: usize,
    n_components: usize,
    data: Vec<f64>,
}

impl Responsibilities {
    pub fn from_rows(n_components: usize, data: Vec<f64>) -> Self {
        assert!(n_components > 0 && data.len().is_multiple_of(n_components));
        Self { n_items: data.len() / n_components, n_components, data }
    }

    /// One-hot rows for a hard assignment.
    pub fn from_labels(labels: &[usize], n_components: usize) -> Self {
        let mut data = vec![0.0; labels.len() * n_components];
        for (i, &k) in labels.iter().enumerate() {
            data[i * n_components + k] = 1.0;
        }
        Self { n_items: labels.len(), n_components, data }
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_components..(i + 1) * self.n_components]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_components..(i + 1) * self.n_components]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.n_components + k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Largest deviation of a row sum from one.
    pub fn max_row_defect(&self) -> f64 {
        (0..self.n_items).map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `a·self + b·other`, entrywise.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.data.len(), other.data.len());
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        Self { data, ..*self }
    }
}

/// E-step output: responsibilities plus the per-component feature sums they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub resp: Responsibilities,
    n_features: usize,
    sums: Vec<f64>,
}

impl SufficientStats {
    pub fn new(resp: Responsibilities, n_features: usize, sums: Vec<f64>) -> Self {
        assert_eq!(sums.len(), resp.n_components() * n_features);
        Self { resp, n_features, sums }
    }

    pub fn n_components(&self) -> usize {
        self.resp.n_components()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// `Σ_i r[i][k] · feature_j(y_i)`.
    pub fn sum(&self, k: usize, j: usize) -> f64 {
        self.sums[k * self.n_features + j]
    }

    /// Responsibility mass `Σ_i r[i][k]`.
    pub fn mass(&self, k: usize) -> f64 {
        self.sum(k, 0)
    }

    pub fn total_mass(&self) -> f64 {
        (0..self.n_components()).map(|k| self.mass(k)).sum()
    }

    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    /// `a·self + b·other` for both responsibilities and sums.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        let sums = self.sums.iter().zip(&other.sums).map(|(x, y)| a * x + b * y).collect();
        Self { resp: self.resp.combine(a, &other.resp, b), n_features: self.n_features, sums }
    }

    /// Accumulates `other` into `self` (plain sum).
    pub fn accumulate(&mut self, other: &Self) {
        for (x, y) in self.sums.iter_mut().zip(&other.sums) {
            *x += y;
        }
        for (x, y) in self.resp.data.iter_mut().zip(&other.resp.data) {
            *x += y;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.sums.iter_mut().for_each(|x| *x *= factor);
        self.resp.data.iter_mut().for_each(|x| *x *= factor);
    }

    pub(crate) fn zeros(n_items: usize, n_components: usize, n_features: usize) -> Self {
        Self {
            resp: Responsibilities { n_items, n_components, data: vec![0.0; n_items * n_components] },
            n_features,
            sums: vec![0.0; n_components * n_features],
        }
    }
}

/// `log Σ exp(x_k)`, stable for large negative entries.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Contract implemented by every mixture model the drivers can fit.
///
/// Required methods describe the component family; everything else (E-step,
/// likelihood, classification, posterior sampling, free-coordinate maps) is
/// provided on top of them.
pub trait LatentModel: Send + Sync {
    fn family(&self) -> &'static str;

    fn n_items(&self) -> usize;

    fn n_components(&self) -> usize;

    fn layout(&self) -> &Arc<BlockLayout>;

    /// Validates model-specific constraints on `θ`.
    fn check(&self, theta: &ParamVec) -> Result<()>;

    /// `log f_k(y_i | θ)`, the component density without its weight.
    fn log_component_density(&self, theta: &ParamVec, item: usize, k: usize) -> f64;

    fn n_features(&self) -> usize;

    /// Writes the sufficient-statistic features of one item; `out[0]` must be 1.
    fn item_features(&self, item: usize, out: &mut [f64]);

    /// Exact maximizer of `Q(· | ·)` given the statistics.
    fn m_step(&self, stats: &SufficientStats) -> Result<ParamVec>;

    /// `Σ_k Σ_i r[i][k] log f_k(y_i | θ)` evaluated from the feature sums.
    fn expected_component_loglik(&self, stats: &SufficientStats, theta: &ParamVec) -> f64;

    /// Closed-form maximizer of `Q` over the non-weight coordinate `coord`
    /// (an index into `θ.values()`) with every other coordinate held fixed.
    fn coordinate_maximizer(&self, stats: &SufficientStats, theta: &ParamVec, coord: usize) -> f64;

    /// Indices of the dispersion coordinates (variances); empty if none.
    fn dispersion_coords(&self) -> Vec<usize> {
        Vec::new()
    }

    /// Draws `θ ~ p(θ | z, y)` under the model's non-informative prior.
    fn draw_complete_posterior(&self, labels: &[usize], current: &ParamVec, rng: &mut dyn RngCore) -> Result<ParamVec>;

    /// Non-trivial parameter expansions this model supports for PX-EM.
    /// The null expansion is available for every model and is not returned here.
    fn px_expansion(&self, _kind: ExpansionKind) -> Option<Box<dyn ExpandedModel + '_>> {
        None
    }

    // ---- provided -------------------------------------------------------

    fn weights<'a>(&self, theta: &'a ParamVec) -> &'a [f64] {
        &theta.values()[..self.n_components()]
    }

    /// Shared weight checks; models call this from `check`.
    fn check_weights(&self, theta: &ParamVec) -> Result<()> {
        if !Arc::ptr_eq(theta.layout(), self.layout()) && theta.layout() != self.layout() {
            return Err(EmError::InvalidParam("parameter layout does not match model".into()));
        }
        let w = self.weights(theta);
        let open_unit = |p: f64| p > 0.0 && p < 1.0;
        if w.len() > 1 {
            if let Some(k) = w.iter().position(|&p| !open_unit(p)) {
                return Err(EmError::InvalidParam(format!("weight {} = {} outside (0, 1)", k + 1, w[k])));
            }
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(EmError::InvalidParam(format!("weights sum to {s}")));
        }
        Ok(())
    }

    /// Writes `log(π_k f_k(y_i | θ))` for all `k`.
    fn log_joint_row(&self, theta: &ParamVec, item: usize, out: &mut [f64]) {
        let w = self.weights(theta);
        for (k, o) in out.iter_mut().enumerate() {
            *o = w[k].ln() + self.log_component_density(theta, item, k);
        }
    }

    /// `L(θ) = Σ_i log Σ_k π_k f_k(y_i | θ)`.
    fn log_obs_lik(&self, theta: &ParamVec) -> f64 {
        let mut row = vec![0.0; self.n_components()];
        (0..self.n_items())
            .map(|i| {
                self.log_joint_row(theta, i, &mut row);
                log_sum_exp(&row)
            })
            .sum()
    }

    /// `L(θ)`, or `−∞` when `θ` fails `check`.
    fn log_lik_or_neg_inf(&self, theta: &ParamVec) -> f64 {
        if !theta.is_finite() || self.check(theta).is_err() {
            return f64::NEG_INFINITY;
        }
        let l = self.log_obs_lik(theta);
        if l.is_nan() {
            f64::NEG_INFINITY
        } else {
            l
        }
    }

    /// Posterior label probabilities of one item, computed in the log domain.
    fn responsibility_row(&self, theta: &ParamVec, item: usize, out: &mut [f64]) -> Result<()> {
        self.log_joint_row(theta, item, out);
        let lse = log_sum_exp(out);
        if !lse.is_finite() {
            return Err(EmError::NonFinite(format!("total density of item {item} is {lse}")));
        }
        out.iter_mut().for_each(|x| *x = (*x - lse).exp());
        Ok(())
    }

    fn responsibilities(&self, theta: &ParamVec) -> Result<Responsibilities> {
        let k = self.n_components();
        let mut data = vec![0.0; self.n_items() * k];
        for (i, row) in data.chunks_mut(k).enumerate() {
            self.responsibility_row(theta, i, row)?;
        }
        Ok(Responsibilities::from_rows(k, data))
    }

    /// Feature sums implied by a responsibility matrix, accumulated in item order.
    fn stats_from_resp(&self, resp: Responsibilities) -> SufficientStats {
        let nf = self.n_features();
        let k = self.n_components();
        let mut sums = vec![0.0; k * nf];
        let mut feat = vec![0.0; nf];
        for i in 0..self.n_items() {
            self.item_features(i, &mut feat);
            for (c, &r) in resp.row(i).iter().enumerate() {
                if r != 0.0 {
                    for (s, f) in sums[c * nf..(c + 1) * nf].iter_mut().zip(&feat) {
                        *s += r * f;
                    }
                }
            }
        }
        SufficientStats::new(resp, nf, sums)
    }

    fn stats_from_labels(&self, labels: &[usize]) -> SufficientStats {
        self.stats_from_resp(Responsibilities::from_labels(labels, self.n_components()))
    }

    /// E-step: responsibilities and feature sums at `θ`.
    fn e_stats(&self, theta: &ParamVec) -> Result<SufficientStats> {
        Ok(self.stats_from_resp(self.responsibilities(theta)?))
    }

    /// `Q(θ | θ') = Σ_i Σ_k r'[i][k] log(π_k f_k(y_i | θ))` where `r'` are the stats' responsibilities.
    fn q_value(&self, stats: &SufficientStats, theta: &ParamVec) -> f64 {
        let w = self.weights(theta);
        let weight_part: f64 = (0..self.n_components())
            .map(|k| {
                let m = stats.mass(k);
                if m == 0.0 {
                    0.0
                } else {
                    m * w[k].ln()
                }
            })
            .sum();
        weight_part + self.expected_component_loglik(stats, theta)
    }

    /// Conditional maximization of `Q` over the listed blocks, the rest held at `θ`.
    ///
    /// `Q` separates over the layout blocks (weights, then one block per
    /// component), so the joint maximizer restricted to `blocks` is exact.
    fn cm_step(&self, stats: &SufficientStats, theta: &ParamVec, blocks: &[usize]) -> Result<ParamVec> {
        let full = self.m_step(stats)?;
        let mut out = theta.clone();
        for &b in blocks {
            out = out.with_block_from(&full, b);
        }
        Ok(out)
    }

    /// Complete-data log-likelihood `log p(z, y | θ)` of a hard assignment.
    fn log_comp_lik(&self, labels: &[usize], theta: &ParamVec) -> f64 {
        let w = self.weights(theta);
        labels.iter().enumerate().map(|(i, &k)| w[k].ln() + self.log_component_density(theta, i, k)).sum()
    }

    /// `arg max_z p(z | y, θ)`, ties broken toward the lowest component index.
    fn classify(&self, theta: &ParamVec) -> Labels {
        let mut row = vec![0.0; self.n_components()];
        (0..self.n_items())
            .map(|i| {
                self.log_joint_row(theta, i, &mut row);
                let mut best = 0;
                for k in 1..row.len() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    /// Draws `z ~ p(z | y, θ)`, consuming exactly one uniform per item.
    fn sample_posterior(&self, theta: &ParamVec, rng: &mut dyn RngCore) -> Result<Labels> {
        let resp = self.responsibilities(theta)?;
        Ok(sample_rows(&resp, rng))
    }

    /// Unconstrained coordinates: every weight but the last, then all component coordinates.
    fn to_free(&self, theta: &ParamVec) -> Vec<f64> {
        let k = self.n_components();
        let v = theta.values();
        v[..k - 1].iter().chain(&v[k..]).copied().collect()
    }

    /// Inverse of [`to_free`](Self::to_free); the last weight is `1 − Σ others`.
    #[allow(clippy::wrong_self_convention)]
    fn from_free(&self, free: &[f64]) -> ParamVec {
        let k = self.n_components();
        let head: f64 = free[..k - 1].iter().sum();
        let mut values = Vec::with_capacity(self.layout().dim());
        values.extend_from_slice(&free[..k - 1]);
        values.push(1.0 - head);
        values.extend_from_slice(&free[k - 1..]);
        ParamVec::from_raw(values, Arc::clone(self.layout()))
    }

    fn free_names(&self) -> Vec<String> {
        let k = self.n_components();
        let names = self.layout().qualified_names();
        names[..k - 1].iter().chain(&names[k..]).cloned().collect()
    }
}

/// Inverse-CDF draw of one label per responsibility row.
pub fn sample_rows(resp: &Responsibilities, rng: &mut dyn RngCore) -> Labels {
    (0..resp.n_items())
        .map(|i| {
            let u: f64 = rng.random();
            let row = resp.row(i);
            let mut acc = 0.0;
            for (k, &r) in row.iter().enumerate() {
                acc += r;
                if u < acc {
                    return k;
                }
            }
            // u landed in the rounding gap above the row sum
            row.iter().rposition(|&r| r > 0.0).unwrap_or(row.len() - 1)
        })
        .collect()
}

/// `Φ(θ) = m_step(e_stats(θ))`, the EM fixed-point map.
pub fn em_map(model: &dyn LatentModel, theta: &ParamVec) -> Result<ParamVec> {
    model.check(theta)?;
    model.m_step(&model.e_stats(theta)?)
}
