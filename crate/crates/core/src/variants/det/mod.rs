//! Deterministic drivers.

mod aem;
mod aitken;
mod cem;
mod coordinate;
mod gem;
mod incremental;
pub mod px;
mod sparse;

pub use aem::AemDriver;
pub use aitken::{aitken_update, AitkenDriver};
pub use cem::CemDriver;
pub use coordinate::{ecm_chain, ecme_newton, sage_sweep, EcmDriver, EcmeDriver, SageDriver};
pub use gem::{gem_ascent, GemDriver};
pub use incremental::IncrementalDriver;
pub use px::PxEmDriver;
pub use sparse::SparseDriver;

use crate::error::Result;
use crate::params::ParamVec;

use super::{Driver, StepContext, StepOutput};

/// Plain EM: one exact E-step, one exact M-step.
pub struct EmDriver;

impl Driver for EmDriver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let model = ctx.model;
        let stats = model.e_stats(theta)?;
        let next = model.m_step(&stats)?;
        let q_gain = model.q_value(&stats, &next) - model.q_value(&stats, theta);
        let mut out = StepOutput::new(next);
        out.q_gain = Some(q_gain);
        out.evaluations = (model.n_items() * model.n_components()) as u64;
        Ok(out)
    }
}
