//! Parameter-expanded EM.
//!
//! An expansion embeds the model in a family `q(z, y | θ, α)` with a null
//! value `α₀` at which `q` equals the original complete-data density, and a
//! reduction `r(θ, α)` mapping back to the original parameter so that the
//! observed-data marginals agree. PX-EM runs the E-step at `(θ_n, α₀)`, the
//! M-step jointly over `(θ, α)`, and reduces.

use std::sync::Arc;

use crate::error::{EmError, Result};
use crate::model::{log_sum_exp, LatentModel, SufficientStats};
use crate::models::{normal_logpdf, GaussianMixture};
use crate::params::ParamVec;
use crate::variants::{Driver, StepContext, StepOutput};

/// Tolerance of the null-value embedding check.
pub const EMBEDDING_TOL: f64 = 1e-12;
/// Relative tolerance of the marginal-consistency check.
pub const MARGINAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionKind {
    /// `α` is empty and `r(θ, α) = θ`.
    Null,
    /// Common location-scale factor on every component (Gaussian only).
    Scale,
}

pub trait ExpandedModel {
    fn base(&self) -> &dyn LatentModel;

    fn null_alpha(&self) -> Vec<f64>;

    /// A non-null `α` used by the marginal-consistency check.
    fn probe_alpha(&self) -> Vec<f64> {
        self.null_alpha()
    }

    /// Writes `log q(z_i = k, y_i | θ, α)` for all `k`.
    fn expanded_log_joint_row(&self, theta: &ParamVec, alpha: &[f64], item: usize, out: &mut [f64]);

    /// Joint maximizer of the expanded `Q` given E-step statistics computed at `(θ_n, α₀)`.
    fn expanded_m_step(&self, stats: &SufficientStats) -> Result<(ParamVec, Vec<f64>)>;

    /// `r(θ, α)`.
    fn reduce(&self, theta: &ParamVec, alpha: &[f64]) -> Result<ParamVec>;
}

/// Checks `q(z, y | θ, α₀) = p(z, y | θ)` pointwise and
/// `p(y | r(θ, α)) = Σ_z q(z, y | θ, α)` at the probe `α`.
pub fn verify_expansion(exp: &dyn ExpandedModel, theta: &ParamVec) -> Result<()> {
    let model = exp.base();
    model.check(theta)?;
    let k = model.n_components();
    let (mut a, mut b) = (vec![0.0; k], vec![0.0; k]);
    let null = exp.null_alpha();
    for i in 0..model.n_items() {
        exp.expanded_log_joint_row(theta, &null, i, &mut a);
        model.log_joint_row(theta, i, &mut b);
        for j in 0..k {
            if (a[j] - b[j]).abs() > EMBEDDING_TOL * b[j].abs().max(1.0) {
                return Err(EmError::Config(format!(
                    "expansion does not embed the model at item {i}, component {}",
                    j + 1
                )));
            }
        }
    }
    let probe = exp.probe_alpha();
    let reduced = exp.reduce(theta, &probe)?;
    let direct = model.log_obs_lik(&reduced);
    let expanded: f64 = (0..model.n_items())
        .map(|i| {
            exp.expanded_log_joint_row(theta, &probe, i, &mut a);
            log_sum_exp(&a)
        })
        .sum();
    if (direct - expanded).abs() > MARGINAL_TOL * direct.abs().max(1.0) {
        return Err(EmError::Config(format!("expansion marginal {expanded} disagrees with reduced model {direct}")));
    }
    Ok(())
}

/// The trivial expansion; PX-EM with it is plain EM.
pub struct NullExpansion<'a> {
    model: &'a dyn LatentModel,
}

impl<'a> NullExpansion<'a> {
    pub fn new(model: &'a dyn LatentModel) -> Self {
        Self { model }
    }
}

impl ExpandedModel for NullExpansion<'_> {
    fn base(&self) -> &dyn LatentModel {
        self.model
    }

    fn null_alpha(&self) -> Vec<f64> {
        Vec::new()
    }

    fn expanded_log_joint_row(&self, theta: &ParamVec, _alpha: &[f64], item: usize, out: &mut [f64]) {
        self.model.log_joint_row(theta, item, out);
    }

    fn expanded_m_step(&self, stats: &SufficientStats) -> Result<(ParamVec, Vec<f64>)> {
        Ok((self.model.m_step(stats)?, Vec::new()))
    }

    fn reduce(&self, theta: &ParamVec, _alpha: &[f64]) -> Result<ParamVec> {
        Ok(theta.clone())
    }
}

/// Latent-scale expansion of a Gaussian mixture: `y | z = k ~ N(α μ_k, α² σ²_k)`,
/// reduced by `r(θ, α) = (π, α μ, α² σ²)`, null value `α₀ = 1`.
///
/// The expanded `Q` depends on `(θ, α)` only through `r(θ, α)`, so its
/// maximizers form a ridge. We pick the point with `α` equal to the fitted
/// mixture's root-mean-square scale.
pub struct ScaleExpansion<'a> {
    model: &'a GaussianMixture,
}

impl<'a> ScaleExpansion<'a> {
    pub fn new(model: &'a GaussianMixture) -> Self {
        Self { model }
    }
}

impl ExpandedModel for ScaleExpansion<'_> {
    fn base(&self) -> &dyn LatentModel {
        self.model
    }

    fn null_alpha(&self) -> Vec<f64> {
        vec![1.0]
    }

    fn probe_alpha(&self) -> Vec<f64> {
        vec![1.7]
    }

    fn expanded_log_joint_row(&self, theta: &ParamVec, alpha: &[f64], item: usize, out: &mut [f64]) {
        let a = alpha[0];
        let y = self.model.data()[item];
        let w = self.model.weights(theta);
        for (k, o) in out.iter_mut().enumerate() {
            let mu = self.model.mean(theta, k);
            let var = self.model.variance(theta, k);
            *o = w[k].ln() + normal_logpdf(y, a * mu, a * a * var);
        }
    }

    fn expanded_m_step(&self, stats: &SufficientStats) -> Result<(ParamVec, Vec<f64>)> {
        let fitted = self.model.m_step(stats)?;
        let k = self.model.k();
        let w = self.model.weights(&fitted);
        let second: f64 = (0..k)
            .map(|j| {
                let mu = self.model.mean(&fitted, j);
                w[j] * (mu * mu + self.model.variance(&fitted, j))
            })
            .sum();
        let alpha = if second > 0.0 { second.sqrt() } else { 1.0 };
        let mut v = fitted.values().to_vec();
        for j in 0..k {
            v[k + 2 * j] /= alpha;
            v[k + 2 * j + 1] /= alpha * alpha;
        }
        Ok((ParamVec::new(v, Arc::clone(self.model.layout()))?, vec![alpha]))
    }

    fn reduce(&self, theta: &ParamVec, alpha: &[f64]) -> Result<ParamVec> {
        let a = alpha[0];
        let k = self.model.k();
        let mut v = theta.values().to_vec();
        for j in 0..k {
            v[k + 2 * j] *= a;
            v[k + 2 * j + 1] *= a * a;
        }
        theta.with_values(v)
    }
}

pub struct PxEmDriver<'m> {
    expansion: Box<dyn ExpandedModel + 'm>,
}

impl<'m> PxEmDriver<'m> {
    pub fn new(expansion: Box<dyn ExpandedModel + 'm>) -> Self {
        Self { expansion }
    }
}

impl Driver for PxEmDriver<'_> {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let model = ctx.model;
        // E-step at (θ_n, α₀), which the embedding check equates with the base E-step
        let stats = model.e_stats(theta)?;
        let (theta_star, alpha_star) = self.expansion.expanded_m_step(&stats)?;
        let next = self.expansion.reduce(&theta_star, &alpha_star)?;
        let mut out = StepOutput::new(next);
        out.q_gain = Some(model.q_value(&stats, &out.theta) - model.q_value(&stats, theta));
        out.evaluations = (model.n_items() * model.n_components()) as u64;
        Ok(out)
    }
}
