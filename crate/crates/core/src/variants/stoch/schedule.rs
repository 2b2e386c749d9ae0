//! Step-size (`γ_n`) and Monte Carlo sample-count (`m_n`) schedules.

use crate::error::{EmError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum GammaSchedule {
    Constant(f64),
    /// `γ_n = 1/n`.
    Harmonic,
    /// `γ_n = 1` for `n ≤ offset`, then `(n − offset)^{−exponent}`.
    Power {
        offset: usize,
        exponent: f64,
    },
    /// Explicit values for `n = 1, 2, …`; the last value repeats.
    Table(Vec<f64>),
}

impl GammaSchedule {
    pub fn saem2_default() -> Self {
        GammaSchedule::Power { offset: 50, exponent: 0.7 }
    }

    /// `γ_n` for the 1-based iteration `n`.
    pub fn gamma(&self, n: usize) -> f64 {
        assert!(n >= 1, "iterations are 1-based");
        match self {
            GammaSchedule::Constant(g) => *g,
            GammaSchedule::Harmonic => 1.0 / n as f64,
            GammaSchedule::Power { offset, exponent } => {
                if n <= *offset {
                    1.0
                } else {
                    ((n - offset) as f64).powf(-exponent)
                }
            }
            GammaSchedule::Table(v) => v[(n - 1).min(v.len() - 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            GammaSchedule::Constant(g) => (0.0..=1.0).contains(g),
            GammaSchedule::Harmonic => true,
            GammaSchedule::Power { exponent, .. } => *exponent > 0.0 && exponent.is_finite(),
            GammaSchedule::Table(v) => !v.is_empty() && v.iter().all(|g| (0.0..=1.0).contains(g)),
        };
        if ok {
            Ok(())
        } else {
            Err(EmError::Config(format!("invalid gamma schedule {self:?}")))
        }
    }

    /// Whether the schedule satisfies `γ_n → 0`, `Σ γ_n = ∞` and
    /// `γ_n / γ_{n+1} → 1`, decided from its closed form.
    pub fn is_convergent(&self) -> bool {
        match self {
            GammaSchedule::Harmonic => true,
            // n^{-a}: tends to 0 for a > 0, diverging sum for a ≤ 1, ratio ((n+1)/n)^a → 1
            GammaSchedule::Power { exponent, .. } => *exponent > 0.0 && *exponent <= 1.0,
            GammaSchedule::Constant(_) | GammaSchedule::Table(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleSchedule {
    Constant(usize),
    /// `m_n = n²`.
    Quadratic,
    /// Explicit counts for `n = 1, 2, …`; the last value repeats.
    Table(Vec<usize>),
}

impl SampleSchedule {
    pub fn samples(&self, n: usize) -> usize {
        assert!(n >= 1, "iterations are 1-based");
        match self {
            SampleSchedule::Constant(m) => *m,
            SampleSchedule::Quadratic => n * n,
            SampleSchedule::Table(v) => v[(n - 1).min(v.len() - 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            SampleSchedule::Constant(m) => *m >= 1,
            SampleSchedule::Quadratic => true,
            SampleSchedule::Table(v) => !v.is_empty() && v.iter().all(|&m| m >= 1),
        };
        if ok {
            Ok(())
        } else {
            Err(EmError::Config(format!("invalid sample schedule {self:?}")))
        }
    }
}
