use nalgebra::{DMatrix, DVector};

use crate::diagnostics::fd;
use crate::error::{EmError, Result};
use crate::model::em_map;
use crate::params::ParamVec;
use crate::variants::{Driver, StepContext, StepOutput};

/// Largest drop of `L` tolerated before an accelerated step is replaced by the EM step.
pub const AITKEN_MAX_DROP: f64 = 1e-6;

/// `v + S⁻¹ (v* − v)` with `S⁻¹ = J_y⁻¹ 𝒥_z`, solved through a Cholesky factor of `J_y`.
pub fn aitken_update(v: &[f64], v_star: &[f64], j_y: &DMatrix<f64>, j_z: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = j_y
        .clone()
        .cholesky()
        .ok_or_else(|| EmError::Singular("observed information is not positive definite".into()))?;
    let delta = DVector::from_iterator(v.len(), v_star.iter().zip(v).map(|(a, b)| a - b));
    let x = chol.solve(&(j_z * delta));
    Ok(v.iter().zip(x.iter()).map(|(a, b)| a + b).collect())
}

/// Aitken-accelerated EM with finite-difference information matrices,
/// safeguarded by falling back to the EM step.
pub struct AitkenDriver;

impl Driver for AitkenDriver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let model = ctx.model;
        let n = model.n_items() as u64;
        let star = em_map(model, theta)?;
        let l0 = model.log_obs_lik(theta);
        let v = model.to_free(theta);
        let v_star = model.to_free(&star);

        let stats = model.e_stats(theta)?;
        let calls = std::cell::Cell::new(0u64);
        let loglik = |x: &[f64]| {
            calls.set(calls.get() + 1);
            model.log_lik_or_neg_inf(&model.from_free(x))
        };
        let q = |x: &[f64]| {
            let t = model.from_free(x);
            if model.check(&t).is_err() {
                f64::NEG_INFINITY
            } else {
                model.q_value(&stats, &t)
            }
        };
        let j_y = -fd::hessian(&loglik, &v);
        let j_z = -fd::hessian(&q, &v);

        let accelerated = aitken_update(&v, &v_star, &j_y, &j_z).and_then(|x| {
            let cand = model.from_free(&x);
            let l = model.log_lik_or_neg_inf(&cand);
            if l.is_finite() && l >= l0 - AITKEN_MAX_DROP {
                Ok(cand)
            } else {
                Err(EmError::InvalidParam(format!("accelerated step gives L = {l}")))
            }
        });
        let (next, note) = match accelerated {
            Ok(t) => (t, None),
            Err(e) => (star, Some(format!("fallback to EM step: {e}"))),
        };
        let mut out = StepOutput::new(next);
        out.note = note;
        out.evaluations = (calls.get() + 2) * n * model.n_components() as u64;
        Ok(out)
    }
}
