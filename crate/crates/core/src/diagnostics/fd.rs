//! Central finite differences with a relative step and Richardson fallback.

use nalgebra::DMatrix;

/// Relative step: `h_i = REL_STEP · max(|x_i|, 1)`.
pub const REL_STEP: f64 = 1e-4;
/// Entrywise disagreement between step `h` and `h/2` that triggers Richardson extrapolation.
pub const RICHARDSON_TRIGGER: f64 = 1e-3;

fn steps(x: &[f64], scale: f64) -> Vec<f64> {
    x.iter().map(|v| scale * REL_STEP * v.abs().max(1.0)).collect()
}

fn shifted(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(i, d) in moves {
        y[i] += d;
    }
    y
}

fn hessian_at(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let f0 = f(x);
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        let fp = f(&shifted(x, &[(i, h[i])]));
        let fm = f(&shifted(x, &[(i, -h[i])]));
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let pp = f(&shifted(x, &[(i, h[i]), (j, h[j])]));
            let pm = f(&shifted(x, &[(i, h[i]), (j, -h[j])]));
            let mp = f(&shifted(x, &[(i, -h[i]), (j, h[j])]));
            let mm = f(&shifted(x, &[(i, -h[i]), (j, -h[j])]));
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn max_rel_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(f64::MIN_POSITIVE);
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max)
}

/// Symmetric Hessian of `f` at `x`.
pub fn hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> DMatrix<f64> {
    let h = steps(x, 1.0);
    let coarse = hessian_at(f, x, &h);
    let half: Vec<f64> = h.iter().map(|v| v / 2.0).collect();
    let fine = hessian_at(f, x, &half);
    if max_rel_gap(&coarse, &fine) > RICHARDSON_TRIGGER {
        (fine * 4.0 - coarse) / 3.0
    } else {
        coarse
    }
}

pub fn gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = steps(x, 1.0);
    (0..x.len()).map(|i| (f(&shifted(x, &[(i, h[i])])) - f(&shifted(x, &[(i, -h[i])]))) / (2.0 * h[i])).collect()
}

/// Jacobian `∂F_i/∂x_j` of a vector map.
pub fn jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> DMatrix<f64> {
    let h = steps(x, 1.0);
    let d = x.len();
    let mut cols = Vec::with_capacity(d);
    for (j, &hj) in h.iter().enumerate() {
        let p = f(&shifted(x, &[(j, hj)]));
        let m = f(&shifted(x, &[(j, -hj)]));
        cols.push(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * hj)).collect::<Vec<_>>());
    }
    let rows = cols.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, d, |i, j| cols[j][i])
}
