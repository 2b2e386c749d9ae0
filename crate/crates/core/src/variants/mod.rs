//! EM drivers: each variant is a small state machine advanced one iteration
//! at a time by [`run_fit`](crate::fit::run_fit).

pub mod det;
pub mod stoch;

pub use det::px;

use crate::error::{EmError, Result};
use crate::model::LatentModel;
use crate::params::{BlockLayout, ParamVec};
use crate::rng::RngStream;

use self::px::ExpansionKind;
use self::stoch::schedule::{GammaSchedule, SampleSchedule};

/// Default threshold below which sparse EM freezes a responsibility.
pub const DEFAULT_SPARSE_TAU: f64 = 1e-3;
/// Default number of iterations between global refreshes in sparse EM.
pub const DEFAULT_SPARSE_PERIOD: usize = 5;

/// How a coordinate-wise variant groups parameter blocks into CM-steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockPlan {
    /// One CM-step per layout block, in layout order.
    Model,
    /// A single CM-step over every block (reduces to a plain M-step).
    Single,
    /// One CM-step per block, in the given order (a permutation of block indices).
    Order(Vec<usize>),
}

impl BlockPlan {
    pub fn groups(&self, layout: &BlockLayout) -> Result<Vec<Vec<usize>>> {
        let n = layout.n_blocks();
        match self {
            BlockPlan::Model => Ok((0..n).map(|b| vec![b]).collect()),
            BlockPlan::Single => Ok(vec![(0..n).collect()]),
            BlockPlan::Order(order) => {
                let mut seen = vec![false; n];
                for &b in order {
                    if b >= n || seen[b] {
                        return Err(EmError::Config(format!("block order {order:?} is not a permutation of 0..{n}")));
                    }
                    seen[b] = true;
                }
                if order.len() != n {
                    return Err(EmError::Config(format!("block order {order:?} is not a permutation of 0..{n}")));
                }
                Ok(order.iter().map(|&b| vec![b]).collect())
            }
        }
    }
}

/// Simulation kernel used by SAEM2.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    /// Independent draws from `p(z | y, θ)`.
    Exact,
    /// Single-site Metropolis-Hastings chain targeting `p(z | y, θ)`;
    /// each draw is taken after `sweeps × n_items` proposals.
    MetropolisHastings { sweeps: usize },
}

/// Which driver to run, with the options relevant to it.
#[derive(Debug, Clone, PartialEq)]
pub enum VariantConfig {
    Em,
    /// `ascent_passes = None` performs the exact M-step.
    Gem {
        ascent_passes: Option<usize>,
    },
    Cem {
        hold_weights: bool,
        hold_dispersion: bool,
    },
    Aitken,
    /// `unit_step` forces `λ = 1` and drops the direction history every iteration.
    Aem {
        line_tol: f64,
        max_bracket: usize,
        unit_step: bool,
    },
    Ecm {
        plan: BlockPlan,
    },
    Ecme {
        plan: BlockPlan,
        newton: bool,
    },
    Sage {
        plan: BlockPlan,
    },
    PxEm {
        expansion: ExpansionKind,
    },
    /// `batch = None` updates a quarter of the items (rounded up) per iteration.
    Incremental {
        batch: Option<usize>,
    },
    /// `refresh_period = None` never refreshes after the first iteration.
    Sparse {
        tau: f64,
        refresh_period: Option<usize>,
    },
    Sem,
    Da,
    Saem {
        gamma: GammaSchedule,
    },
    Mcem {
        samples: SampleSchedule,
    },
    Saem2 {
        gamma: GammaSchedule,
        samples: SampleSchedule,
        kernel: KernelKind,
    },
}

impl VariantConfig {
    pub const TAGS: [&'static str; 16] = [
        "em",
        "gem",
        "cem",
        "aitken",
        "aem",
        "ecm",
        "ecme",
        "sage",
        "px_em",
        "incremental",
        "sparse",
        "sem",
        "da",
        "saem",
        "mcem",
        "saem2",
    ];

    /// Default configuration for a variant name.
    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "em" => VariantConfig::Em,
            "gem" => VariantConfig::Gem { ascent_passes: Some(1) },
            "cem" => VariantConfig::Cem { hold_weights: false, hold_dispersion: false },
            "aitken" => VariantConfig::Aitken,
            "aem" => VariantConfig::Aem { line_tol: 1e-6, max_bracket: 20, unit_step: false },
            "ecm" => VariantConfig::Ecm { plan: BlockPlan::Model },
            "ecme" => VariantConfig::Ecme { plan: BlockPlan::Model, newton: true },
            "sage" => VariantConfig::Sage { plan: BlockPlan::Model },
            "px_em" => VariantConfig::PxEm { expansion: ExpansionKind::Null },
            "incremental" => VariantConfig::Incremental { batch: None },
            "sparse" => VariantConfig::Sparse { tau: DEFAULT_SPARSE_TAU, refresh_period: Some(DEFAULT_SPARSE_PERIOD) },
            "sem" => VariantConfig::Sem,
            "da" => VariantConfig::Da,
            "saem" => VariantConfig::Saem { gamma: GammaSchedule::Harmonic },
            "mcem" => VariantConfig::Mcem { samples: SampleSchedule::Constant(100) },
            "saem2" => VariantConfig::Saem2 {
                gamma: GammaSchedule::saem2_default(),
                samples: SampleSchedule::Constant(1),
                kernel: KernelKind::Exact,
            },
            other => return Err(EmError::Config(format!("unknown variant `{other}`"))),
        })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            VariantConfig::Em => "em",
            VariantConfig::Gem { .. } => "gem",
            VariantConfig::Cem { .. } => "cem",
            VariantConfig::Aitken => "aitken",
            VariantConfig::Aem { .. } => "aem",
            VariantConfig::Ecm { .. } => "ecm",
            VariantConfig::Ecme { .. } => "ecme",
            VariantConfig::Sage { .. } => "sage",
            VariantConfig::PxEm { .. } => "px_em",
            VariantConfig::Incremental { .. } => "incremental",
            VariantConfig::Sparse { .. } => "sparse",
            VariantConfig::Sem => "sem",
            VariantConfig::Da => "da",
            VariantConfig::Saem { .. } => "saem",
            VariantConfig::Mcem { .. } => "mcem",
            VariantConfig::Saem2 { .. } => "saem2",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            VariantConfig::Sem
                | VariantConfig::Da
                | VariantConfig::Saem { .. }
                | VariantConfig::Mcem { .. }
                | VariantConfig::Saem2 { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            VariantConfig::Aem { line_tol, max_bracket, .. } => {
                if !(*line_tol > 0.0) || *max_bracket == 0 {
                    return Err(EmError::Config("aem needs line_tol > 0 and max_bracket ≥ 1".into()));
                }
            }
            VariantConfig::Incremental { batch: Some(0) } => {
                return Err(EmError::Config("incremental batch must be at least 1".into()));
            }
            // τ = 0 and τ = 1 are allowed as the two reduction cases
            VariantConfig::Sparse { tau, refresh_period } => {
                if !(0.0..=1.0).contains(tau) {
                    return Err(EmError::Config(format!("sparse tau {tau} outside [0, 1]")));
                }
                if *refresh_period == Some(0) {
                    return Err(EmError::Config("sparse refresh period must be at least 1".into()));
                }
            }
            VariantConfig::Saem { gamma } => gamma.validate()?,
            VariantConfig::Mcem { samples } => samples.validate()?,
            VariantConfig::Saem2 { gamma, samples, kernel } => {
                gamma.validate()?;
                samples.validate()?;
                if let KernelKind::MetropolisHastings { sweeps: 0 } = kernel {
                    return Err(EmError::Config("mh sweeps must be at least 1".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Per-iteration context handed to a driver.
pub struct StepContext<'a> {
    pub model: &'a dyn LatentModel,
    /// 1-based index of the iteration being computed.
    pub iter: usize,
    pub rng: &'a RngStream,
}

/// What one driver step produced.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub theta: ParamVec,
    pub q_gain: Option<f64>,
    pub objective: Option<f64>,
    pub note: Option<String>,
    pub rng_words: u64,
    pub evaluations: u64,
}

impl StepOutput {
    pub fn new(theta: ParamVec) -> Self {
        Self { theta, q_gain: None, objective: None, note: None, rng_words: 0, evaluations: 0 }
    }
}

pub trait Driver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput>;

    /// Stochastic drivers run for the full iteration budget.
    fn is_stochastic(&self) -> bool {
        false
    }

    /// Whether the stopping rule may be applied after the latest step. Drivers
    /// whose iterates stall between scheduled refreshes return `false` until
    /// the next refresh.
    fn stop_allowed(&self) -> bool {
        true
    }
}

/// Instantiates the driver for `config`; `theta0` feeds construction-time checks.
pub fn build_driver<'m>(
    model: &'m dyn LatentModel,
    config: &VariantConfig,
    theta0: &ParamVec,
) -> Result<Box<dyn Driver + 'm>> {
    use det::*;
    use stoch::*;
    let layout = model.layout();
    Ok(match config {
        VariantConfig::Em => Box::new(EmDriver),
        VariantConfig::Gem { ascent_passes } => Box::new(GemDriver::new(*ascent_passes)),
        VariantConfig::Cem { hold_weights, hold_dispersion } => {
            Box::new(CemDriver::new(*hold_weights, *hold_dispersion))
        }
        VariantConfig::Aitken => Box::new(AitkenDriver),
        VariantConfig::Aem { line_tol, max_bracket, unit_step } => {
            Box::new(AemDriver::new(*line_tol, *max_bracket, *unit_step))
        }
        VariantConfig::Ecm { plan } => Box::new(EcmDriver::new(plan.groups(layout)?)),
        VariantConfig::Ecme { plan, newton } => Box::new(EcmeDriver::new(plan.groups(layout)?, *newton)),
        VariantConfig::Sage { plan } => Box::new(SageDriver::new(plan.groups(layout)?)),
        VariantConfig::PxEm { expansion } => {
            let exp: Box<dyn px::ExpandedModel + 'm> = match expansion {
                ExpansionKind::Null => Box::new(px::NullExpansion::new(model)),
                kind => model
                    .px_expansion(*kind)
                    .ok_or_else(|| EmError::Config(format!("{} model has no {kind:?} expansion", model.family())))?,
            };
            px::verify_expansion(exp.as_ref(), theta0)?;
            Box::new(PxEmDriver::new(exp))
        }
        VariantConfig::Incremental { batch } => {
            let n = model.n_items();
            Box::new(IncrementalDriver::new(batch.unwrap_or(n.div_ceil(4)).min(n)))
        }
        VariantConfig::Sparse { tau, refresh_period } => Box::new(SparseDriver::new(*tau, *refresh_period)),
        VariantConfig::Sem => Box::new(SemDriver),
        VariantConfig::Da => Box::new(DaDriver),
        VariantConfig::Saem { gamma } => Box::new(SaemDriver::new(gamma.clone())),
        VariantConfig::Mcem { samples } => Box::new(McemDriver::new(samples.clone())),
        VariantConfig::Saem2 { gamma, samples, kernel } => {
            Box::new(Saem2Driver::new(gamma.clone(), samples.clone(), kernel.clone()))
        }
    })
}
