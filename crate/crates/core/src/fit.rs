//! The generic fit loop, stopping rules and trace recording.

use std::time::Instant;

use crate::error::{EmError, Result};
use crate::model::LatentModel;
use crate::params::ParamVec;
use crate::rng::RngStream;
use crate::variants::{build_driver, StepContext, VariantConfig};

/// How the parameter and log-likelihood tolerances combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopMode {
    AnyOf,
    AllOf,
}

/// Termination rule: stop when the tolerances are met or `max_iters` is reached.
///
/// A tolerance of zero never triggers, since both tests are strict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub max_iters: usize,
    /// Sup-norm of the parameter change.
    pub tol_param: f64,
    /// Absolute change of `L(θ)`.
    pub tol_loglik: f64,
    pub mode: StopMode,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self { max_iters: 500, tol_param: 1e-8, tol_loglik: 1e-8, mode: StopMode::AnyOf }
    }
}

impl StoppingRule {
    pub fn new(max_iters: usize, tol_param: f64, tol_loglik: f64, mode: StopMode) -> Result<Self> {
        let rule = Self { max_iters, tol_param, tol_loglik, mode };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(EmError::Config("max_iters must be at least 1".into()));
        }
        if !(self.tol_param >= 0.0) || !(self.tol_loglik >= 0.0) {
            return Err(EmError::Config("tolerances must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn satisfied(&self, delta_loglik: f64, delta_param: f64) -> bool {
        let l = delta_loglik.abs() < self.tol_loglik;
        let p = delta_param < self.tol_param;
        match self.mode {
            StopMode::AnyOf => l || p,
            StopMode::AllOf => l && p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Converged,
    MaxIters,
    Diverged,
    InvalidParam,
}

impl FitStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitStatus::Converged => "converged",
            FitStatus::MaxIters => "max-iters",
            FitStatus::Diverged => "diverged",
            FitStatus::InvalidParam => "invalid-param",
        }
    }
}

/// One iteration of a fit. Iteration 0 holds the starting point.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub iter: usize,
    pub theta: ParamVec,
    pub loglik: f64,
    /// `Q(θ_{n+1} | θ_n) − Q(θ_n | θ_n)` when the driver computes it.
    pub q_gain: Option<f64>,
    /// The driver's own monotone objective when it is not `L` (CEM, incremental, sparse).
    pub objective: Option<f64>,
    pub note: Option<String>,
    /// Random words consumed during the iteration.
    pub rng_words: u64,
    /// Component-density evaluations performed during the iteration.
    pub evaluations: u64,
    pub wall_time: f64,
}

impl IterRecord {
    /// Equality on everything but timing.
    pub fn same_path(&self, other: &Self) -> bool {
        self.iter == other.iter
            && self.theta == other.theta
            && self.loglik.to_bits() == other.loglik.to_bits()
            && opt_bits(self.q_gain) == opt_bits(other.q_gain)
            && opt_bits(self.objective) == opt_bits(other.objective)
            && self.note == other.note
            && self.rng_words == other.rng_words
            && self.evaluations == other.evaluations
    }
}

fn opt_bits(x: Option<f64>) -> Option<u64> {
    x.map(f64::to_bits)
}

#[derive(Debug, Clone)]
pub struct FitTrace {
    pub variant: String,
    pub seed: u64,
    pub initial: IterRecord,
    pub records: Vec<IterRecord>,
    pub status: FitStatus,
    /// Why the run stopped early, when it did.
    pub message: Option<String>,
}

impl FitTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> &IterRecord {
        self.records.last().unwrap_or(&self.initial)
    }

    pub fn final_theta(&self) -> &ParamVec {
        &self.last().theta
    }

    pub fn final_loglik(&self) -> f64 {
        self.last().loglik
    }

    /// `L(θ_0), L(θ_1), …`
    pub fn logliks(&self) -> Vec<f64> {
        std::iter::once(&self.initial).chain(&self.records).map(|r| r.loglik).collect()
    }

    pub fn thetas(&self) -> impl Iterator<Item = &ParamVec> {
        std::iter::once(&self.initial).chain(&self.records).map(|r| &r.theta)
    }

    /// Bitwise equality of the optimization path, ignoring wall time.
    pub fn same_path(&self, other: &Self) -> bool {
        self.variant == other.variant
            && self.status == other.status
            && self.message == other.message
            && self.initial.same_path(&other.initial)
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| a.same_path(b))
    }

    /// Largest relative drop `(L_n − L_{n+1}) / |L_n|` along the trace (0 if monotone).
    pub fn worst_relative_drop(&self) -> f64 {
        self.logliks().windows(2).map(|w| (w[0] - w[1]) / w[0].abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
    }
}

/// Runs `config` from `theta0` until `stop` triggers. See [`run_fit_observed`].
pub fn run_fit(
    model: &dyn LatentModel,
    config: &VariantConfig,
    theta0: &ParamVec,
    stop: &StoppingRule,
    seed: u64,
) -> Result<FitTrace> {
    run_fit_observed(model, config, theta0, stop, seed, &mut |_| {})
}

/// Fit loop with a callback invoked on every completed iteration record
/// (including iteration 0), in order.
///
/// Precondition failures (invalid `θ0`, bad configuration) are errors.
/// Numerical failures during the run end the trace with status `Diverged`
/// or `InvalidParam` instead. Stochastic drivers ignore the tolerances and
/// run for `max_iters` iterations.
pub fn run_fit_observed(
    model: &dyn LatentModel,
    config: &VariantConfig,
    theta0: &ParamVec,
    stop: &StoppingRule,
    seed: u64,
    observer: &mut dyn FnMut(&IterRecord),
) -> Result<FitTrace> {
    stop.validate()?;
    config.validate()?;
    model.check(theta0)?;
    let mut driver = build_driver(model, config, theta0)?;
    let rng = RngStream::new(seed);
    let start = Instant::now();

    let l0 = model.log_obs_lik(theta0);
    let initial = IterRecord {
        iter: 0,
        theta: theta0.clone(),
        loglik: l0,
        q_gain: None,
        objective: None,
        note: None,
        rng_words: 0,
        evaluations: 0,
        wall_time: 0.0,
    };
    observer(&initial);
    let mut trace = FitTrace {
        variant: config.tag().to_string(),
        seed,
        initial,
        records: Vec::new(),
        status: FitStatus::MaxIters,
        message: None,
    };
    if !l0.is_finite() {
        trace.status = FitStatus::Diverged;
        trace.message = Some(format!("initial log-likelihood is {l0}"));
        return Ok(trace);
    }

    let stochastic = driver.is_stochastic();
    let mut theta = theta0.clone();
    let mut loglik = l0;
    for iter in 1..=stop.max_iters {
        let ctx = StepContext { model, iter, rng: &rng };
        let out = match driver.step(&ctx, &theta) {
            Ok(out) => out,
            Err(EmError::Config(msg)) => return Err(EmError::Config(msg)),
            Err(EmError::InvalidParam(msg)) => {
                trace.status = FitStatus::InvalidParam;
                trace.message = Some(format!("iteration {iter}: {msg}"));
                break;
            }
            Err(e) => {
                trace.status = FitStatus::Diverged;
                trace.message = Some(format!("iteration {iter}: {e}"));
                break;
            }
        };
        if let Err(e) = model.check(&out.theta) {
            trace.status = if out.theta.is_finite() { FitStatus::InvalidParam } else { FitStatus::Diverged };
            trace.message = Some(format!("iteration {iter}: {e}"));
            break;
        }
        let next_loglik = model.log_obs_lik(&out.theta);
        if !next_loglik.is_finite() {
            trace.status = FitStatus::Diverged;
            trace.message = Some(format!("iteration {iter}: log-likelihood is {next_loglik}"));
            break;
        }
        let d_param = out.theta.sup_dist(&theta);
        let d_loglik = next_loglik - loglik;
        let record = IterRecord {
            iter,
            theta: out.theta,
            loglik: next_loglik,
            q_gain: out.q_gain,
            objective: out.objective,
            note: out.note,
            rng_words: out.rng_words,
            evaluations: out.evaluations,
            wall_time: start.elapsed().as_secs_f64(),
        };
        observer(&record);
        theta = record.theta.clone();
        loglik = next_loglik;
        trace.records.push(record);
        if !stochastic && driver.stop_allowed() && stop.satisfied(d_loglik, d_param) {
            trace.status = FitStatus::Converged;
            break;
        }
    }
    Ok(trace)
}
