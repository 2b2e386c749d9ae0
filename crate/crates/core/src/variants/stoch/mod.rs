//! Stochastic drivers.
//!
//! Every iteration draws from fresh substreams indexed by the iteration number,
//! so a chain restarted from `θ_n` at iteration `n + 1` replays exactly.

pub mod mh;
pub mod schedule;
mod stationary;

pub use stationary::{StationaryEstimate, DEFAULT_BURN_IN_FRACTION};

use rand_chacha::ChaCha20Rng;

use crate::error::{EmError, Result};
use crate::model::{em_map, sample_rows, LatentModel, Responsibilities, SufficientStats};
use crate::params::ParamVec;
use crate::rng::{words_used, Purpose};

use self::mh::{mh_step, MH_REJECTION_WARNING};
use self::schedule::{GammaSchedule, SampleSchedule};
use super::{Driver, KernelKind, StepContext, StepOutput};

/// Redraws allowed when a draw leaves a component empty.
pub const MAX_RESAMPLES: usize = 10;

fn resample_note(attempts: usize) -> Option<String> {
    (attempts > 0).then(|| format!("resampled {attempts} times after degenerate draws"))
}

/// Runs `attempt` until it succeeds or a non-degenerate error occurs, allowing
/// [`MAX_RESAMPLES`] retries on degenerate draws. Returns the value and the retry count.
fn with_resampling<T>(mut attempt: impl FnMut() -> Result<T>) -> Result<(T, usize)> {
    let mut retries = 0;
    loop {
        match attempt() {
            Ok(v) => return Ok((v, retries)),
            Err(EmError::Degenerate { .. }) if retries < MAX_RESAMPLES => retries += 1,
            Err(e) => return Err(e),
        }
    }
}

/// Mean of the hard-label statistics of `m` independent posterior draws.
fn averaged_draws(
    model: &dyn LatentModel,
    resp: &Responsibilities,
    m: usize,
    rng: &mut ChaCha20Rng,
) -> SufficientStats {
    let mut acc = SufficientStats::zeros(model.n_items(), model.n_components(), model.n_features());
    for _ in 0..m {
        let labels = sample_rows(resp, rng);
        acc.accumulate(&model.stats_from_labels(&labels));
    }
    acc.scale(1.0 / m as f64);
    acc
}

/// One SEM update from `θ`: draw `z ~ p(z | y, θ)` and maximize `log p(z, y | θ)`.
pub fn sem_update(model: &dyn LatentModel, theta: &ParamVec, rng: &mut ChaCha20Rng) -> Result<(ParamVec, usize)> {
    let resp = model.responsibilities(theta)?;
    with_resampling(|| {
        let labels = sample_rows(&resp, rng);
        model.m_step(&model.stats_from_labels(&labels))
    })
}

fn per_eval(model: &dyn LatentModel) -> u64 {
    (model.n_items() * model.n_components()) as u64
}

/// Stochastic EM.
pub struct SemDriver;

impl Driver for SemDriver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let mut rng = ctx.rng.substream(Purpose::Labels, ctx.iter as u64);
        let (next, retries) = sem_update(ctx.model, theta, &mut rng)?;
        let mut out = StepOutput::new(next);
        out.note = resample_note(retries);
        out.rng_words = words_used(&rng);
        out.evaluations = per_eval(ctx.model);
        Ok(out)
    }

    fn is_stochastic(&self) -> bool {
        true
    }
}

/// Data augmentation: alternate `z ~ p(z | y, θ_n)` and `θ_{n+1} ~ p(θ | z, y)`.
pub struct DaDriver;

impl Driver for DaDriver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let model = ctx.model;
        let mut labels_rng = ctx.rng.substream(Purpose::Labels, ctx.iter as u64);
        let mut params_rng = ctx.rng.substream(Purpose::Params, ctx.iter as u64);
        let resp = model.responsibilities(theta)?;
        let (next, retries) = with_resampling(|| {
            let labels = sample_rows(&resp, &mut labels_rng);
            model.draw_complete_posterior(&labels, theta, &mut params_rng)
        })?;
        let mut out = StepOutput::new(next);
        out.note = resample_note(retries);
        out.rng_words = words_used(&labels_rng) + words_used(&params_rng);
        out.evaluations = per_eval(model);
        Ok(out)
    }

    fn is_stochastic(&self) -> bool {
        true
    }
}

/// `θ_{n+1} = (1 − γ) θ^{EM} + γ θ^{SEM}`. `γ = 0` returns the EM step and
/// `γ = 1` the SEM step unchanged.
pub struct SaemDriver {
    schedule: GammaSchedule,
}

impl SaemDriver {
    pub fn new(schedule: GammaSchedule) -> Self {
        Self { schedule }
    }
}

impl Driver for SaemDriver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let model = ctx.model;
        let gamma = self.schedule.gamma(ctx.iter);
        let mut rng = ctx.rng.substream(Purpose::Labels, ctx.iter as u64);
        let (next, note) = if gamma == 0.0 {
            (em_map(model, theta)?, None)
        } else {
            let (sem, retries) = sem_update(model, theta, &mut rng)?;
            if gamma == 1.0 {
                (sem, resample_note(retries))
            } else {
                let em = em_map(model, theta)?;
                let v = em.values().iter().zip(sem.values()).map(|(a, b)| (1.0 - gamma) * a + gamma * b).collect();
                (theta.with_values(v)?, resample_note(retries))
            }
        };
        let mut out = StepOutput::new(next);
        out.note = note;
        out.rng_words = words_used(&rng);
        out.evaluations = per_eval(model);
        Ok(out)
    }

    fn is_stochastic(&self) -> bool {
        true
    }
}

/// Monte Carlo EM: M-step on the statistics averaged over `m_n` posterior draws.
pub struct McemDriver {
    schedule: SampleSchedule,
}

impl McemDriver {
    pub fn new(schedule: SampleSchedule) -> Self {
        Self { schedule }
    }
}

impl Driver for McemDriver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let model = ctx.model;
        let m = self.schedule.samples(ctx.iter);
        let mut rng = ctx.rng.substream(Purpose::Labels, ctx.iter as u64);
        let resp = model.responsibilities(theta)?;
        let (next, retries) = with_resampling(|| model.m_step(&averaged_draws(model, &resp, m, &mut rng)))?;
        let mut out = StepOutput::new(next);
        out.note = resample_note(retries);
        out.rng_words = words_used(&rng);
        out.evaluations = per_eval(model);
        Ok(out)
    }

    fn is_stochastic(&self) -> bool {
        true
    }
}

/// Stochastic approximation on the statistics:
/// `s_n = (1 − γ_n) s_{n−1} + γ_n · mean of m_n draws`, `θ_{n+1} = m_step(s_n)`.
///
/// The first iteration sets `s_1` to the draw average. Draws come either from
/// the exact posterior or from a single-site Metropolis–Hastings chain whose
/// state persists across iterations.
pub struct Saem2Driver {
    gamma: GammaSchedule,
    samples: SampleSchedule,
    kernel: KernelKind,
    stats: Option<SufficientStats>,
    chain: Option<Vec<usize>>,
    rejections: u64,
}

impl Saem2Driver {
    pub fn new(gamma: GammaSchedule, samples: SampleSchedule, kernel: KernelKind) -> Self {
        Self { gamma, samples, kernel, stats: None, chain: None, rejections: 0 }
    }

    /// Consecutive MH rejections at the end of the last iteration.
    pub fn consecutive_rejections(&self) -> u64 {
        self.rejections
    }
}

impl Driver for Saem2Driver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let model = ctx.model;
        let gamma = self.gamma.gamma(ctx.iter);
        let m = self.samples.samples(ctx.iter);
        let n = model.n_items();
        let (next, retries, words, evaluations) = match self.kernel {
            KernelKind::Exact => {
                let mut rng = ctx.rng.substream(Purpose::Labels, ctx.iter as u64);
                let resp = model.responsibilities(theta)?;
                let prev = self.stats.clone();
                let mut kept = None;
                let (next, retries) = with_resampling(|| {
                    let avg = averaged_draws(model, &resp, m, &mut rng);
                    let s = match &prev {
                        None => avg,
                        Some(p) => p.combine(1.0 - gamma, &avg, gamma),
                    };
                    let t = model.m_step(&s)?;
                    kept = Some(s);
                    Ok(t)
                })?;
                self.stats = kept;
                (next, retries, words_used(&rng), per_eval(model))
            }
            KernelKind::MetropolisHastings { sweeps } => {
                let mut rng = ctx.rng.substream(Purpose::Kernel, ctx.iter as u64);
                let chain = self.chain.get_or_insert_with(|| model.classify(theta));
                let prev = self.stats.clone();
                let rejections = &mut self.rejections;
                let mut kept = None;
                let mut proposals = 0u64;
                let (next, retries) = with_resampling(|| {
                    let mut acc = SufficientStats::zeros(n, model.n_components(), model.n_features());
                    for _ in 0..m {
                        for _ in 0..sweeps * n {
                            proposals += 1;
                            if mh_step(model, theta, chain, &mut rng) {
                                *rejections = 0;
                            } else {
                                *rejections += 1;
                            }
                        }
                        acc.accumulate(&model.stats_from_labels(chain));
                    }
                    acc.scale(1.0 / m as f64);
                    let s = match &prev {
                        None => acc,
                        Some(p) => p.combine(1.0 - gamma, &acc, gamma),
                    };
                    let t = model.m_step(&s)?;
                    kept = Some(s);
                    Ok(t)
                })?;
                self.stats = kept;
                (next, retries, words_used(&rng), 2 * proposals)
            }
        };
        let mut out = StepOutput::new(next);
        out.note = resample_note(retries);
        if self.rejections > MH_REJECTION_WARNING {
            out.note = Some(format!("warning: {} consecutive MH rejections", self.rejections));
        }
        out.rng_words = words;
        out.evaluations = evaluations;
        Ok(out)
    }

    fn is_stochastic(&self) -> bool {
        true
    }
}
