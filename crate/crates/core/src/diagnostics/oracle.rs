//! Exhaustive grid search over `L(θ)`, used to verify fitted optima.

use crate::error::{EmError, Result};
use crate::model::LatentModel;
use crate::models::{GaussianMixture, PoissonMixture};
use crate::params::ParamVec;

/// Largest grid accepted by [`brute_force_mle`].
pub const MAX_GRID_POINTS: u128 = 100_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    /// Number of points, endpoints included.
    pub points: usize,
}

impl GridAxis {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64, points: usize) -> Self {
        Self { name: name.into(), lo, hi, points }
    }

    /// The `j`-th grid value. Refining an axis to `2p − 1` points reproduces
    /// every old value exactly at index `2j`.
    pub fn value(&self, j: usize) -> f64 {
        if self.points == 1 {
            return self.lo;
        }
        self.lo + (self.hi - self.lo) * (j as f64 / (self.points - 1) as f64)
    }

    pub fn step(&self) -> f64 {
        if self.points > 1 {
            (self.hi - self.lo) / (self.points - 1) as f64
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Self {
        Self { axes }
    }

    pub fn size(&self) -> u128 {
        self.axes.iter().map(|a| a.points as u128).product()
    }

    /// Halves every step while keeping all existing points.
    pub fn refined(&self) -> Self {
        let axes = self.axes.iter().map(|a| GridAxis { points: 2 * a.points - 1, ..a.clone() }).collect();
        Self { axes }
    }

    /// Grid of the same shape spanning one step either side of `center`.
    pub fn zoomed(&self, center: &[f64]) -> Self {
        let axes = self
            .axes
            .iter()
            .zip(center)
            .map(|(a, &c)| {
                let h = a.step();
                GridAxis { lo: c - h, hi: c + h, ..a.clone() }
            })
            .collect();
        Self { axes }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub grid: GridSpec,
    /// Grid coordinates of the maximizer.
    pub point: Vec<f64>,
    pub theta: ParamVec,
    pub max_loglik: f64,
    /// Grid points enumerated (including ones the map rejected).
    pub evaluated: u64,
}

/// Evaluates `L` at every grid point mapped to a valid parameter by `map`.
///
/// Points are visited in lexicographic order (first axis slowest) and only a
/// strict improvement replaces the incumbent, so ties resolve to the
/// lexicographically smallest grid point.
pub fn brute_force_mle(
    model: &dyn LatentModel,
    grid: &GridSpec,
    map: &dyn Fn(&[f64]) -> Option<ParamVec>,
) -> Result<OracleResult> {
    let size = grid.size();
    if size == 0 || size > MAX_GRID_POINTS {
        return Err(EmError::Config(format!("grid has {size} points; allowed 1..={MAX_GRID_POINTS}")));
    }
    let d = grid.axes.len();
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    let mut best: Option<(f64, Vec<f64>, ParamVec)> = None;
    for _ in 0..size {
        for (p, (a, &j)) in point.iter_mut().zip(grid.axes.iter().zip(&idx)) {
            *p = a.value(j);
        }
        if let Some(theta) = map(&point) {
            let l = model.log_lik_or_neg_inf(&theta);
            if l.is_finite() && best.as_ref().is_none_or(|(b, _, _)| l > *b) {
                best = Some((l, point.clone(), theta));
            }
        }
        for a in (0..d).rev() {
            idx[a] += 1;
            if idx[a] < grid.axes[a].points {
                break;
            }
            idx[a] = 0;
        }
    }
    let (max_loglik, point, theta) =
        best.ok_or_else(|| EmError::Config("no grid point maps to a valid parameter".into()))?;
    Ok(OracleResult { grid: grid.clone(), point, theta, max_loglik, evaluated: size as u64 })
}

/// Coarse search followed by `stages` zoomed searches around the incumbent.
/// The reported maximum never decreases from one stage to the next.
pub fn brute_force_zoom(
    model: &dyn LatentModel,
    grid: &GridSpec,
    map: &dyn Fn(&[f64]) -> Option<ParamVec>,
    stages: usize,
) -> Result<OracleResult> {
    let mut best = brute_force_mle(model, grid, map)?;
    let mut evaluated = best.evaluated;
    for _ in 0..stages {
        let next = brute_force_mle(model, &best.grid.zoomed(&best.point), map)?;
        evaluated += next.evaluated;
        if next.max_loglik > best.max_loglik {
            best = next;
        } else {
            best.grid = best.grid.zoomed(&best.point);
        }
    }
    best.evaluated = evaluated;
    Ok(best)
}

/// Grid coordinates `(π_1 … π_{K−1}, μ_1 … μ_K, σ)` with a standard deviation shared by all components.
pub fn gaussian_shared_sd_map(model: &GaussianMixture) -> impl Fn(&[f64]) -> Option<ParamVec> + '_ {
    move |x: &[f64]| {
        let k = model.n_components();
        let mut w = x[..k - 1].to_vec();
        w.push(1.0 - w.iter().sum::<f64>());
        let means = &x[k - 1..2 * k - 1];
        let sd = x[2 * k - 1];
        let theta = model.params(&w, means, &vec![sd * sd; k]).ok()?;
        model.check(&theta).ok().map(|_| theta)
    }
}

/// Grid coordinates `(π_1 … π_{K−1}, λ_1 … λ_K)`.
pub fn poisson_map(model: &PoissonMixture) -> impl Fn(&[f64]) -> Option<ParamVec> + '_ {
    move |x: &[f64]| {
        let k = model.n_components();
        let mut w = x[..k - 1].to_vec();
        w.push(1.0 - w.iter().sum::<f64>());
        let theta = model.params(&w, &x[k - 1..]).ok()?;
        model.check(&theta).ok().map(|_| theta)
    }
}

/// Default axes for [`gaussian_shared_sd_map`] spanning the data range.
pub fn gaussian_default_grid(model: &GaussianMixture, points: usize) -> GridSpec {
    let k = model.n_components();
    let (lo, hi) = model.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let span = (hi - lo).max(1e-3);
    let mut axes: Vec<GridAxis> = (1..k).map(|j| GridAxis::new(format!("pi{j}"), 0.0, 1.0, points)).collect();
    axes.extend((1..=k).map(|j| GridAxis::new(format!("mu{j}"), lo, hi, points)));
    axes.push(GridAxis::new("sd", span / (4.0 * points as f64), span, points));
    GridSpec::new(axes)
}

/// Default axes for [`poisson_map`] spanning `[0, max count]`.
pub fn poisson_default_grid(model: &PoissonMixture, points: usize) -> GridSpec {
    let k = model.n_components();
    let hi = model.counts().iter().copied().max().unwrap_or(1).max(1) as f64;
    let mut axes: Vec<GridAxis> = (1..k).map(|j| GridAxis::new(format!("pi{j}"), 0.0, 1.0, points)).collect();
    axes.extend((1..=k).map(|j| GridAxis::new(format!("lambda{j}"), 0.0, hi, points)));
    GridSpec::new(axes)
}
