use crate::diagnostics::free_energy;
use crate::error::Result;
use crate::model::{log_sum_exp, Responsibilities};
use crate::params::ParamVec;
use crate::variants::{Driver, StepContext, StepOutput};

/// Sparse EM: after a global refresh, responsibilities below `τ` are frozen
/// and only the plausible entries of each row are recomputed, renormalized to
/// the mass the frozen entries leave over.
///
/// Refreshes happen on iterations `1, 1 + period, 1 + 2·period, …` (only the
/// first when `period` is `None`). For `τ < 1` an item whose entries would all
/// be frozen keeps its whole row plausible; `τ ≥ 1` freezes every entry, so
/// `q` never changes after the first refresh.
pub struct SparseDriver {
    tau: f64,
    period: Option<usize>,
    cache: Option<Responsibilities>,
    plausible: Vec<bool>,
    refreshed: bool,
}

impl SparseDriver {
    pub fn new(tau: f64, period: Option<usize>) -> Self {
        Self { tau, period, cache: None, plausible: Vec::new(), refreshed: false }
    }

    fn due(&self, iter: usize) -> bool {
        match self.period {
            _ if self.cache.is_none() => true,
            Some(p) => (iter - 1).is_multiple_of(p),
            None => iter == 1,
        }
    }

    /// Fraction of frozen responsibility entries.
    pub fn frozen_fraction(&self) -> f64 {
        if self.plausible.is_empty() {
            return 0.0;
        }
        self.plausible.iter().filter(|&&p| !p).count() as f64 / self.plausible.len() as f64
    }
}

impl Driver for SparseDriver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let model = ctx.model;
        let n = model.n_items();
        let k = model.n_components();
        let mut evaluations = 0u64;
        self.refreshed = self.due(ctx.iter);
        if self.refreshed {
            let resp = model.responsibilities(theta)?;
            evaluations += (n * k) as u64;
            self.plausible = if self.tau >= 1.0 {
                vec![false; n * k]
            } else {
                let mut mask: Vec<bool> = resp.as_slice().iter().map(|&r| r >= self.tau).collect();
                for row in mask.chunks_mut(k) {
                    if row.iter().all(|p| !p) {
                        row.iter_mut().for_each(|p| *p = true);
                    }
                }
                mask
            };
            self.cache = Some(resp);
        } else {
            let cache = self.cache.as_mut().expect("refreshed on the first iteration");
            let w = model.weights(theta);
            let mut logs = Vec::with_capacity(k);
            for i in 0..n {
                let mask = &self.plausible[i * k..(i + 1) * k];
                let live = mask.iter().filter(|&&p| p).count();
                if live == 0 {
                    continue;
                }
                if live == k {
                    model.responsibility_row(theta, i, cache.row_mut(i))?;
                    evaluations += k as u64;
                    continue;
                }
                let row = cache.row_mut(i);
                let frozen: f64 = row.iter().zip(mask).filter(|(_, &p)| !p).map(|(r, _)| r).sum();
                logs.clear();
                for (j, _) in mask.iter().enumerate().filter(|(_, &p)| p) {
                    logs.push(w[j].ln() + model.log_component_density(theta, i, j));
                }
                evaluations += live as u64;
                let lse = log_sum_exp(&logs);
                let free = 1.0 - frozen;
                for ((r, _), l) in row.iter_mut().zip(mask).filter(|(_, &p)| p).zip(&logs) {
                    *r = free * (l - lse).exp();
                }
            }
        }
        let q = self.cache.clone().expect("cache present");
        let stats = model.stats_from_resp(q);
        let next = model.m_step(&stats)?;
        let mut out = StepOutput::new(next);
        out.objective = Some(free_energy(model, &out.theta, &stats.resp)?);
        out.evaluations = evaluations;
        Ok(out)
    }

    // with frozen rows the iterate can stall until the next refresh
    fn stop_allowed(&self) -> bool {
        self.refreshed || self.period.is_none()
    }
}
