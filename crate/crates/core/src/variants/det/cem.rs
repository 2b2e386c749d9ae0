use crate::error::{EmError, Result};
use crate::model::MASS_FLOOR;
use crate::params::ParamVec;
use crate::variants::{Driver, StepContext, StepOutput};

/// Classification EM: hard-assign every item to its most probable component,
/// then maximize the complete-data likelihood of those labels.
///
/// The recorded objective is `log p(z_n, y | θ_{n+1})`, which never decreases.
/// Holding both weights and variances fixed turns the iteration into k-means.
pub struct CemDriver {
    hold_weights: bool,
    hold_dispersion: bool,
}

impl CemDriver {
    pub fn new(hold_weights: bool, hold_dispersion: bool) -> Self {
        Self { hold_weights, hold_dispersion }
    }
}

impl Driver for CemDriver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let model = ctx.model;
        let labels = model.classify(theta);
        let stats = model.stats_from_labels(&labels);
        let n = model.n_items() as f64;
        for j in 0..model.n_components() {
            if !(stats.mass(j) >= MASS_FLOOR * n) {
                return Err(EmError::Degenerate { component: j + 1, reason: "empty class".into() });
            }
        }
        let next = if !self.hold_weights && !self.hold_dispersion {
            model.m_step(&stats)?
        } else {
            let k = model.n_components();
            let held = if self.hold_dispersion { model.dispersion_coords() } else { Vec::new() };
            let mut v = theta.values().to_vec();
            if !self.hold_weights {
                for (j, w) in v.iter_mut().take(k).enumerate() {
                    *w = stats.mass(j) / n;
                }
            }
            for c in k..v.len() {
                if !held.contains(&c) {
                    v[c] = model.coordinate_maximizer(&stats, &theta.with_values(v.clone())?, c);
                }
            }
            let next = theta.with_values(v)?;
            model.check(&next)?;
            next
        };
        let mut out = StepOutput::new(next);
        out.objective = Some(model.log_comp_lik(&labels, &out.theta));
        out.evaluations = (model.n_items() * model.n_components()) as u64;
        Ok(out)
    }
}
