use crate::error::{EmError, Result};
use crate::model::{LatentModel, SufficientStats};
use crate::params::ParamVec;
use crate::variants::{Driver, StepContext, StepOutput};

/// Generalized EM. With `ascent_passes = None` the M-step is exact; otherwise
/// each iteration runs that many coordinate-ascent passes on `Q(· | θ_n)`.
pub struct GemDriver {
    passes: Option<usize>,
}

impl GemDriver {
    pub fn new(passes: Option<usize>) -> Self {
        Self { passes }
    }
}

/// Coordinate ascent on `Q(· | stats)` starting from `theta`.
///
/// Each pass updates weight pairs `(π_j, π_K)` in closed form, then every
/// component coordinate in layout order.
pub fn gem_ascent(
    model: &dyn LatentModel,
    stats: &SufficientStats,
    theta: &ParamVec,
    passes: usize,
) -> Result<ParamVec> {
    let k = model.n_components();
    let mut v = theta.values().to_vec();
    for _ in 0..passes {
        for j in 0..k.saturating_sub(1) {
            let (a, b) = (stats.mass(j), stats.mass(k - 1));
            if a + b > 0.0 {
                let total = v[j] + v[k - 1];
                v[j] = total * a / (a + b);
                v[k - 1] = total - v[j];
            }
        }
        for c in k..v.len() {
            let current = theta.with_values(v.clone())?;
            v[c] = model.coordinate_maximizer(stats, &current, c);
        }
    }
    let next = theta.with_values(v)?;
    model.check(&next).map_err(|e| match e {
        EmError::InvalidParam(reason) => EmError::Degenerate { component: 0, reason },
        other => other,
    })?;
    Ok(next)
}

impl Driver for GemDriver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let model = ctx.model;
        let stats = model.e_stats(theta)?;
        let evaluations = (model.n_items() * model.n_components()) as u64;
        let q0 = model.q_value(&stats, theta);
        let (next, note) = match self.passes {
            None => (model.m_step(&stats)?, None),
            Some(p) => {
                let cand = gem_ascent(model, &stats, theta, p)?;
                if model.q_value(&stats, &cand) > q0 {
                    (cand, None)
                } else {
                    (theta.clone(), Some("stalled: no ascent direction".to_string()))
                }
            }
        };
        let mut out = StepOutput::new(next);
        out.q_gain = Some(model.q_value(&stats, &out.theta) - q0);
        out.note = note;
        out.evaluations = evaluations;
        Ok(out)
    }
}
