#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons make NaN fail every check

//! Expectation-maximization for finite mixtures: the classic algorithm,
//! deterministic and stochastic variants, and diagnostics for its convergence.
//!
//! ```
//! use emkit::{run_fit, GaussianMixture, StoppingRule, VariantConfig};
//!
//! let model = GaussianMixture::new(vec![-5.0, -4.0, 4.0, 5.0], 2).unwrap();
//! let theta0 = model.params(&[0.4, 0.6], &[-3.0, 2.0], &[2.0, 2.0]).unwrap();
//! let trace = run_fit(&model, &VariantConfig::Em, &theta0, &StoppingRule::default(), 0).unwrap();
//! assert!((model.mean(trace.final_theta(), 1) - 4.5).abs() < 1e-6);
//! ```

pub mod diagnostics;
pub mod error;
pub mod fit;
pub mod fixtures;
pub mod model;
pub mod models;
pub mod params;
pub mod rng;
pub mod variants;

pub use error::{EmError, Result};
pub use fit::{run_fit, run_fit_observed, FitStatus, FitTrace, IterRecord, StopMode, StoppingRule};
pub use model::{em_map, LatentModel, Responsibilities, SufficientStats};
pub use models::{GaussianMixture, PoissonMixture, SimulableModel};
pub use params::{BlockLayout, ParamVec};
pub use rng::{Purpose, RngStream};
pub use variants::stoch::schedule::{GammaSchedule, SampleSchedule};
pub use variants::stoch::StationaryEstimate;
pub use variants::{BlockPlan, KernelKind, VariantConfig};
