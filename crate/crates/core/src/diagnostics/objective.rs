//! Auxiliary function, Jensen bound, posterior divergence, free energy and
//! the proximal-point objective. All label sums are exact for mixtures.

use crate::error::{EmError, Result};
use crate::model::{log_sum_exp, LatentModel, Responsibilities};
use crate::params::ParamVec;

/// Row-sum tolerance accepted for a distribution `q` over labels.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// `Q(θ | θ') = E_{z ~ p(z | y, θ')} log p(z, y | θ)`.
pub fn q_function(model: &dyn LatentModel, theta: &ParamVec, theta_prime: &ParamVec) -> Result<f64> {
    model.check(theta)?;
    model.check(theta_prime)?;
    Ok(model.q_value(&model.e_stats(theta_prime)?, theta))
}

/// `(L(θ) − L(θ'), Q(θ | θ') − Q(θ' | θ'))`; the first is never below the second.
pub fn jensen_gap(model: &dyn LatentModel, theta: &ParamVec, theta_prime: &ParamVec) -> Result<(f64, f64)> {
    model.check(theta)?;
    model.check(theta_prime)?;
    let stats = model.e_stats(theta_prime)?;
    let lhs = model.log_obs_lik(theta) - model.log_obs_lik(theta_prime);
    let rhs = model.q_value(&stats, theta) - model.q_value(&stats, theta_prime);
    Ok((lhs, rhs))
}

/// `log p(z_i = k | y_i, θ)` for every item, row-major.
pub fn log_responsibilities(model: &dyn LatentModel, theta: &ParamVec) -> Result<Vec<f64>> {
    let k = model.n_components();
    let mut out = vec![0.0; model.n_items() * k];
    for (i, row) in out.chunks_mut(k).enumerate() {
        model.log_joint_row(theta, i, row);
        let lse = log_sum_exp(row);
        if !lse.is_finite() {
            return Err(EmError::NonFinite(format!("total density of item {i} is {lse}")));
        }
        row.iter_mut().for_each(|x| *x -= lse);
    }
    Ok(out)
}

/// `D(q_{θ'} ‖ q_θ) = Σ_i Σ_k r'_{ik} (log r'_{ik} − log r_{ik})`.
pub fn kl_posterior(model: &dyn LatentModel, theta_prime: &ParamVec, theta: &ParamVec) -> Result<f64> {
    model.check(theta)?;
    model.check(theta_prime)?;
    let lp = log_responsibilities(model, theta_prime)?;
    let lq = log_responsibilities(model, theta)?;
    Ok(lp.iter().zip(&lq).map(|(&a, &b)| if a == f64::NEG_INFINITY { 0.0 } else { a.exp() * (a - b) }).sum())
}

/// `F(θ, q) = E_q[log p(z, y | θ)] + H(q)`.
pub fn free_energy(model: &dyn LatentModel, theta: &ParamVec, q: &Responsibilities) -> Result<f64> {
    let k = model.n_components();
    if q.n_items() != model.n_items() || q.n_components() != k {
        return Err(EmError::InvalidParam("q has the wrong shape".into()));
    }
    let defect = q.max_row_defect();
    if defect > ROW_SUM_TOL || q.as_slice().iter().any(|&x| x < 0.0) {
        return Err(EmError::InvalidParam(format!("q is not row-stochastic (defect {defect:e})")));
    }
    let mut row = vec![0.0; k];
    let mut total = 0.0;
    for i in 0..model.n_items() {
        model.log_joint_row(theta, i, &mut row);
        for (j, &r) in q.row(i).iter().enumerate() {
            if r > 0.0 {
                total += r * (row[j] - r.ln());
            }
        }
    }
    Ok(total)
}

/// `L(θ) − D(q_{θ_n} ‖ q_θ)`, the proximal-point objective with unit penalty weight.
pub fn proximal_objective(model: &dyn LatentModel, theta: &ParamVec, theta_n: &ParamVec) -> Result<f64> {
    Ok(model.log_obs_lik(theta) - kl_posterior(model, theta_n, theta)?)
}
