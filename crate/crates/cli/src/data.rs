//! Data files, model construction and starting points.

use std::path::Path;

use emkit::{GaussianMixture, LatentModel, ParamVec, PoissonMixture, Purpose, RngStream};
use rand::seq::index::sample;
use rand::Rng;

use crate::config::{Family, InitSpec, Settings};
use crate::error::CliError;

/// One observation per line; blank lines and lines starting with `#` are skipped.
pub fn parse_observations<T: std::str::FromStr>(text: &str, origin: &str) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v = line.parse().map_err(|_| CliError::Data(format!("{origin}:{}: cannot parse `{line}`", n + 1)))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{origin}: no observations")));
    }
    Ok(out)
}

pub enum Model {
    Gaussian(GaussianMixture),
    Poisson(PoissonMixture),
}

impl Model {
    pub fn load(settings: &Settings) -> Result<Self, CliError> {
        let path = Path::new(&settings.data);
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let origin = path.display().to_string();
        Ok(match settings.family {
            Family::Gaussian => {
                Model::Gaussian(GaussianMixture::new(parse_observations(&text, &origin)?, settings.components)?)
            }
            Family::Poisson => {
                Model::Poisson(PoissonMixture::new(parse_observations(&text, &origin)?, settings.components)?)
            }
        })
    }

    pub fn as_dyn(&self) -> &dyn LatentModel {
        match self {
            Model::Gaussian(m) => m,
            Model::Poisson(m) => m,
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            Model::Gaussian(m) => m.data().to_vec(),
            Model::Poisson(m) => m.counts().iter().map(|&c| c as f64).collect(),
        }
    }

    fn build(&self, weights: &[f64], locations: &[f64], variances: &[f64]) -> Result<ParamVec, CliError> {
        let theta = match self {
            Model::Gaussian(m) => m.params(weights, locations, variances),
            Model::Poisson(m) => m.params(weights, locations),
        }
        .map_err(|e| CliError::Config(format!("initial parameter: {e}")))?;
        self.as_dyn().check(&theta).map_err(|e| CliError::Config(format!("initial parameter: {e}")))?;
        Ok(theta)
    }

    /// Starting point for restart `r`: the configured start for `r = 0`
    /// (unless it is random), otherwise a draw from init substream `r`.
    pub fn start(&self, settings: &Settings, r: usize) -> Result<ParamVec, CliError> {
        let k = settings.components;
        let y = self.values();
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let spread = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let spread = if spread > 0.0 { spread } else { 1.0 };
        // Poisson rates sit half a count above the chosen observation so a zero count stays valid
        let shift = if matches!(self, Model::Poisson(_)) { 0.5 } else { 0.0 };
        match (&settings.init, r) {
            (InitSpec::Explicit { weights, locations, variances }, 0) => self.build(weights, locations, variances),
            (InitSpec::Quantile, 0) => {
                let mut sorted = y.clone();
                sorted.sort_by(f64::total_cmp);
                let loc: Vec<f64> = (0..k)
                    .map(|j| {
                        let idx = (((j as f64 + 0.5) / k as f64) * n) as usize;
                        sorted[idx.min(sorted.len() - 1)] + shift
                    })
                    .collect();
                self.build(&simplex(vec![1.0; k]), &loc, &vec![spread; k])
            }
            _ => {
                let mut rng = RngStream::new(settings.seed).substream(Purpose::Init, r as u64);
                let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                let picks: Vec<usize> = if k <= y.len() {
                    sample(&mut rng, y.len(), k).into_vec()
                } else {
                    (0..k).map(|_| rng.random_range(0..y.len())).collect()
                };
                let loc: Vec<f64> = picks.iter().map(|&i| y[i] + shift).collect();
                self.build(&simplex(raw), &loc, &vec![spread; k])
            }
        }
    }
}

/// Normalizes positive weights, closing the last one by difference.
fn simplex(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let k = w.len();
    w[k - 1] = 1.0 - w[..k - 1].iter().sum::<f64>();
    w
}
