use crate::error::Result;
use crate::model::{em_map, LatentModel};
use crate::params::ParamVec;
use crate::variants::{Driver, StepContext, StepOutput};

const GOLDEN: f64 = 1.618_033_988_749_895;

/// Conjugate-gradient acceleration on the generalized gradient `g = Φ(θ) − θ`.
///
/// Directions follow Polak–Ribière (clipped at zero) and the step length
/// maximizes `L` along the direction by bracketing then golden-section search,
/// so `L` never decreases.
pub struct AemDriver {
    line_tol: f64,
    max_bracket: usize,
    unit_step: bool,
    prev: Option<(Vec<f64>, Vec<f64>)>,
}

impl AemDriver {
    pub fn new(line_tol: f64, max_bracket: usize, unit_step: bool) -> Self {
        Self { line_tol, max_bracket, unit_step, prev: None }
    }

    /// Current search direction for gradient `g`, given the stored history.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let Some((g_prev, d_prev)) = &self.prev else {
            return g.to_vec();
        };
        let denom = dot(g_prev, g_prev);
        if denom == 0.0 {
            return g.to_vec();
        }
        let diff: Vec<f64> = g.iter().zip(g_prev).map(|(a, b)| a - b).collect();
        let beta = (dot(g, &diff) / denom).max(0.0);
        let d: Vec<f64> = g.iter().zip(d_prev).map(|(a, b)| a + beta * b).collect();
        if dot(&d, g) > 0.0 {
            d
        } else {
            g.to_vec()
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Line<'a> {
    model: &'a dyn LatentModel,
    origin: &'a [f64],
    dir: &'a [f64],
    calls: u64,
}

impl Line<'_> {
    fn at(&mut self, lambda: f64) -> f64 {
        self.calls += 1;
        let x: Vec<f64> = self.origin.iter().zip(self.dir).map(|(o, d)| o + lambda * d).collect();
        self.model.log_lik_or_neg_inf(&self.model.from_free(&x))
    }

    /// Best `λ > 0` with `L` at least `f0`, or `None` when no bracket is found.
    fn maximize(&mut self, f0: f64, tol: f64, max_bracket: usize) -> Option<(f64, f64)> {
        let (mut a, mut b) = (0.0, 1.0);
        let mut fb = self.at(b);
        let c;
        if fb >= f0 {
            let mut steps = 0;
            loop {
                let next = b + GOLDEN * (b - a);
                let fnext = self.at(next);
                if fnext < fb {
                    c = next;
                    break;
                }
                a = b;
                b = next;
                fb = fnext;
                steps += 1;
                if steps >= max_bracket {
                    return Some((b, fb));
                }
            }
        } else {
            let mut hi = 1.0;
            let mut steps = 0;
            loop {
                let mid = hi / (1.0 + GOLDEN);
                let fm = self.at(mid);
                if fm > f0 {
                    b = mid;
                    fb = fm;
                    c = hi;
                    break;
                }
                hi = mid;
                steps += 1;
                if steps >= max_bracket {
                    return None;
                }
            }
        }
        // golden-section on [a, c], keeping the best point seen
        let (mut lo, mut hi) = (a, c);
        let (mut best, mut fbest) = (b, fb);
        let r = 1.0 / GOLDEN;
        let mut x1 = hi - r * (hi - lo);
        let mut x2 = lo + r * (hi - lo);
        let mut f1 = self.at(x1);
        let mut f2 = self.at(x2);
        while (hi - lo) > tol * (1.0 + best.abs()) {
            if f1 >= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - r * (hi - lo);
                f1 = self.at(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + r * (hi - lo);
                f2 = self.at(x2);
            }
            for (x, f) in [(x1, f1), (x2, f2)] {
                if f > fbest {
                    best = x;
                    fbest = f;
                }
            }
        }
        (fbest >= f0).then_some((best, fbest))
    }
}

impl Driver for AemDriver {
    fn step(&mut self, ctx: &StepContext<'_>, theta: &ParamVec) -> Result<StepOutput> {
        let model = ctx.model;
        let per_eval = (model.n_items() * model.n_components()) as u64;
        let star = em_map(model, theta)?;
        if self.unit_step {
            let mut out = StepOutput::new(star);
            out.evaluations = per_eval;
            return Ok(out);
        }
        let v = model.to_free(theta);
        let g: Vec<f64> = model.to_free(&star).iter().zip(&v).map(|(a, b)| a - b).collect();
        let f0 = model.log_obs_lik(theta);
        let mut calls = 1;
        let mut note = None;

        let mut chosen = None;
        let dirs = [self.direction(&g), g.clone()];
        for (attempt, d) in dirs.iter().enumerate() {
            if attempt == 1 && self.prev.is_none() {
                break;
            }
            let mut line = Line { model, origin: &v, dir: d, calls: 0 };
            let found = line.maximize(f0, self.line_tol, self.max_bracket);
            calls += line.calls;
            if let Some((lambda, _)) = found {
                chosen = Some((lambda, d.clone()));
                break;
            }
            note = Some("line search restarted along the steepest direction".to_string());
        }
        let next = match chosen {
            Some((lambda, d)) => {
                let x: Vec<f64> = v.iter().zip(&d).map(|(o, s)| o + lambda * s).collect();
                self.prev = Some((g, d));
                model.from_free(&x)
            }
            None => {
                self.prev = None;
                note = Some("line search failed; took the EM step".to_string());
                star
            }
        };
        let mut out = StepOutput::new(next);
        out.note = note;
        out.evaluations = (calls + 1) * per_eval;
        Ok(out)
    }
}
