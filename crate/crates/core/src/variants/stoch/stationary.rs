use crate::error::{EmError, Result};
use crate::fit::FitTrace;

/// Share of the iterations discarded as burn-in when none is given.
pub const DEFAULT_BURN_IN_FRACTION: f64 = 0.25;

/// Post-burn-in average of a stochastic chain, per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryEstimate {
    pub burn_in: usize,
    pub samples: usize,
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    /// Sample standard deviation (`n − 1` denominator; 0 for a single sample).
    pub sd: Vec<f64>,
}

impl StationaryEstimate {
    /// Averages `θ_{b+1}, …, θ_N` of a trace with `N` iterations and burn-in `b`.
    pub fn from_trace(trace: &FitTrace, burn_in: Option<usize>) -> Result<Self> {
        let rows: Vec<&[f64]> = trace.records.iter().map(|r| r.theta.values()).collect();
        let names = trace.initial.theta.layout().qualified_names();
        Self::from_rows(&rows, names, burn_in)
    }

    pub fn from_rows(rows: &[&[f64]], names: Vec<String>, burn_in: Option<usize>) -> Result<Self> {
        let total = rows.len();
        let burn_in = burn_in.unwrap_or((total as f64 * DEFAULT_BURN_IN_FRACTION) as usize);
        if burn_in >= total {
            return Err(EmError::Config(format!("burn-in {burn_in} leaves no samples out of {total}")));
        }
        let kept = &rows[burn_in..];
        let n = kept.len() as f64;
        let d = names.len();
        let mean: Vec<f64> = (0..d).map(|j| kept.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let sd = (0..d)
            .map(|j| {
                if kept.len() < 2 {
                    return 0.0;
                }
                let ss: f64 = kept.iter().map(|r| (r[j] - mean[j]).powi(2)).sum();
                (ss / (n - 1.0)).sqrt()
            })
            .collect();
        Ok(Self { burn_in, samples: kept.len(), names, mean, sd })
    }
}
