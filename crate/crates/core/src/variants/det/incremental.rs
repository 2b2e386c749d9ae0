use crate::diagnostics::free_energy;
use crate::error::Result;
use crate::model::Responsibilities;
use crate::params::ParamVec;
use crate::variants::{Driver, StepContext, StepOutput};

/// Incremental EM: each iteration refreshes the responsibilities of the next
/// `batch` items (wrapping around), keeps the cached rows of the others, and
/// runs the M-step on the resulting global statistics.
///
/// The first iteration performs a full E-step. The recorded objective is the
/// free energy `F(θ_{n+1}, q_{n+1})` of the cached responsibilities.
pub struct IncrementalDriver {
    batch: usize,
    cursor: usize,
    cache: Option<Responsibilities>,
}

impl IncrementalDriver {
    pub fn new(batch: usize) -> Self {
        Self { batch: batch.max(1), cursor: 0, cache: None }
    }
}

impl Driver for IncrementalDriver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let model = ctx.model;
        let n = model.n_items();
        let k = model.n_components();
        let refreshed = match &mut self.cache {
            None => {
                self.cache = Some(model.responsibilities(theta)?);
                n
            }
            Some(cache) => {
                for _ in 0..self.batch {
                    model.responsibility_row(theta, self.cursor, cache.row_mut(self.cursor))?;
                    self.cursor = (self.cursor + 1) % n;
                }
                self.batch
            }
        };
        let q = self.cache.clone().expect("cache filled above");
        let stats = model.stats_from_resp(q);
        let next = model.m_step(&stats)?;
        let mut out = StepOutput::new(next);
        out.objective = Some(free_energy(model, &out.theta, &stats.resp)?);
        out.evaluations = (refreshed * k) as u64;
        Ok(out)
    }
}
