//! Block-wise variants: ECM, ECME and SAGE.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::model::{log_sum_exp, LatentModel};
use crate::params::ParamVec;
use crate::variants::{Driver, StepContext, StepOutput};

/// Maximum number of step halvings in the ECME Newton step.
pub const NEWTON_HALVINGS: usize = 30;

/// One ECM iteration: a single E-step at `θ`, then one CM-step per group.
///
/// Returns the final parameter and the chain `Q(θ_{n,j} | θ_n)` for
/// `j = 0, …, s`.
pub fn ecm_chain(model: &dyn LatentModel, theta: &ParamVec, groups: &[Vec<usize>]) -> Result<(ParamVec, Vec<f64>)> {
    let stats = model.e_stats(theta)?;
    let mut cur = theta.clone();
    let mut chain = vec![model.q_value(&stats, &cur)];
    for g in groups {
        cur = model.cm_step(&stats, &cur, g)?;
        chain.push(model.q_value(&stats, &cur));
    }
    Ok((cur, chain))
}

/// One SAGE sweep: for each group, refresh the E-step at the current
/// parameter and maximize over that group only. Returns `L` after every cycle.
pub fn sage_sweep(model: &dyn LatentModel, theta: &ParamVec, groups: &[Vec<usize>]) -> Result<(ParamVec, Vec<f64>)> {
    let mut cur = theta.clone();
    let mut ls = Vec::with_capacity(groups.len());
    for g in groups {
        let stats = model.e_stats(&cur)?;
        cur = model.cm_step(&stats, &cur, g)?;
        ls.push(model.log_obs_lik(&cur));
    }
    Ok((cur, ls))
}

/// One Newton–Raphson step on `L` over the first `K − 1` weights, halving the
/// step until the weights stay in the open simplex and `L` does not decrease.
///
/// Returns `None` when every halving fails or the Hessian is not negative definite.
pub fn ecme_newton(model: &dyn LatentModel, theta: &ParamVec) -> Option<ParamVec> {
    let k = model.n_components();
    if k < 2 {
        return None;
    }
    let d = k - 1;
    let w = model.weights(theta);
    let mut grad = DVector::<f64>::zeros(d);
    let mut hess = DMatrix::<f64>::zeros(d, d);
    let mut row = vec![0.0; k];
    let mut ratio = vec![0.0; k];
    for i in 0..model.n_items() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = model.log_component_density(theta, i, j);
        }
        let joint: Vec<f64> = row.iter().zip(w).map(|(f, p)| f + p.ln()).collect();
        let log_p = log_sum_exp(&joint);
        for j in 0..k {
            ratio[j] = (row[j] - log_p).exp();
        }
        for a in 0..d {
            let da = ratio[a] - ratio[d];
            grad[a] += da;
            for b in 0..d {
                hess[(a, b)] -= da * (ratio[b] - ratio[d]);
            }
        }
    }
    let step = (-hess).cholesky()?.solve(&grad);
    let l0 = model.log_obs_lik(theta);
    let mut t = 1.0;
    for _ in 0..=NEWTON_HALVINGS {
        let mut v = theta.values().to_vec();
        for a in 0..d {
            v[a] += t * step[a];
        }
        v[d] = 1.0 - v[..d].iter().sum::<f64>();
        if let Ok(cand) = theta.with_values(v) {
            if model.check(&cand).is_ok() && model.log_obs_lik(&cand) >= l0 {
                return Some(cand);
            }
        }
        t *= 0.5;
    }
    None
}

pub struct EcmDriver {
    groups: Vec<Vec<usize>>,
}

impl EcmDriver {
    pub fn new(groups: Vec<Vec<usize>>) -> Self {
        Self { groups }
    }
}

impl Driver for EcmDriver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let model = ctx.model;
        let (next, chain) = ecm_chain(model, theta, &self.groups)?;
        let mut out = StepOutput::new(next);
        out.q_gain = Some(chain[chain.len() - 1] - chain[0]);
        out.evaluations = (model.n_items() * model.n_components()) as u64;
        Ok(out)
    }
}

/// ECM followed by a Newton step on the weights with respect to `L`.
pub struct EcmeDriver {
    groups: Vec<Vec<usize>>,
    newton: bool,
}

impl EcmeDriver {
    pub fn new(groups: Vec<Vec<usize>>, newton: bool) -> Self {
        Self { groups, newton }
    }
}

impl Driver for EcmeDriver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let model = ctx.model;
        let per_eval = (model.n_items() * model.n_components()) as u64;
        let (mid, chain) = ecm_chain(model, theta, &self.groups)?;
        let mut evaluations = per_eval;
        let mut note = None;
        let next = if self.newton {
            evaluations += 2 * per_eval;
            match ecme_newton(model, &mid) {
                Some(t) => t,
                None => {
                    note = Some("newton step skipped".to_string());
                    mid
                }
            }
        } else {
            mid
        };
        let mut out = StepOutput::new(next);
        out.q_gain = Some(chain[chain.len() - 1] - chain[0]);
        out.note = note;
        out.evaluations = evaluations;
        Ok(out)
    }
}

pub struct SageDriver {
    groups: Vec<Vec<usize>>,
}

impl SageDriver {
    pub fn new(groups: Vec<Vec<usize>>) -> Self {
        Self { groups }
    }
}

impl Driver for SageDriver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let model = ctx.model;
        let (next, _) = sage_sweep(model, theta, &self.groups)?;
        let mut out = StepOutput::new(next);
        out.evaluations = (self.groups.len() * model.n_items() * model.n_components()) as u64;
        Ok(out)
    }
}
