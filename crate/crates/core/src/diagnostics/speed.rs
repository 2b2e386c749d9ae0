//! Speed matrix and convergence-rate diagnostics at a fixed point.
//!
//! Everything is computed in free coordinates (the last weight is eliminated),
//! where `Q(· | θ̂)` has an unconstrained maximizer and `∂Φ/∂θ = I − S`.

use nalgebra::DMatrix;

use super::fd;
use super::objective::kl_posterior;
use crate::error::{EmError, Result};
use crate::model::{em_map, LatentModel};
use crate::params::ParamVec;

/// Largest `‖Φ(θ̂) − θ̂‖_∞` accepted by [`speed_matrix`].
pub const FIXED_POINT_TOL: f64 = 1e-6;
/// Entries of `S` below this magnitude are skipped by the Jacobian cross-check.
pub const CROSS_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SpeedDiagnostics {
    /// Names of the free coordinates, in matrix order.
    pub names: Vec<String>,
    /// `S = 𝒥_z⁻¹ J_y`.
    pub s: DMatrix<f64>,
    /// Observed information `−∂²L`.
    pub j_y: DMatrix<f64>,
    /// Expected complete-data information `−∂²Q(· | θ̂)`.
    pub jz_bar: DMatrix<f64>,
    /// Posterior Fisher information `∂² D(q_θ̂ ‖ q_θ)`, computed on its own path.
    pub f_post: DMatrix<f64>,
    /// Eigenvalues of `S`, ascending (real: `S` is similar to a symmetric matrix).
    pub eigenvalues: Vec<f64>,
    /// `min_i |λ_i(S)|`.
    pub global_speed: f64,
    /// `max_i |λ_i(I − S)|`.
    pub predicted_rate: f64,
    /// Finite-difference Jacobian of the EM map.
    pub jacobian: DMatrix<f64>,
    /// Spectral radius of the Jacobian (from its complex spectrum).
    pub jacobian_radius: f64,
    /// `max |𝒥_z − J_y − F_post| / max |𝒥_z|`.
    pub identity_residual: f64,
    /// Largest relative gap between `S` and `I − ∂Φ/∂θ` over entries above the floor.
    pub jacobian_gap: f64,
    /// Smallest eigenvalue of the symmetrized `F_post`.
    pub f_post_min_eigenvalue: f64,
    /// `‖Φ(θ̂) − θ̂‖_∞`.
    pub residual: f64,
}

impl SpeedDiagnostics {
    /// Whether `F_post` is positive semidefinite up to `tol · max|F_post|`.
    pub fn f_post_is_psd(&self, tol: f64) -> bool {
        self.f_post_min_eigenvalue >= -tol * self.f_post.amax().max(1.0)
    }
}

fn free_fn<'a>(model: &'a dyn LatentModel, f: impl Fn(&ParamVec) -> f64 + 'a) -> impl Fn(&[f64]) -> f64 + 'a {
    move |x: &[f64]| {
        let t = model.from_free(x);
        if !t.values().iter().all(|v| v.is_finite()) || model.check(&t).is_err() {
            f64::NEG_INFINITY
        } else {
            f(&t)
        }
    }
}

/// Speed-matrix diagnostics at `θ̂`, which must be a fixed point of EM.
pub fn speed_matrix(model: &dyn LatentModel, theta_hat: &ParamVec) -> Result<SpeedDiagnostics> {
    let phi = em_map(model, theta_hat)?;
    let residual = phi.sup_dist(theta_hat);
    if residual > FIXED_POINT_TOL {
        return Err(EmError::Config(format!(
            "fixed-point residual {residual:e} exceeds {FIXED_POINT_TOL:e}; rerun with a tighter tolerance"
        )));
    }
    let v = model.to_free(theta_hat);
    let d = v.len();
    let names = model.free_names();
    let stats = model.e_stats(theta_hat)?;

    let loglik = free_fn(model, |t| model.log_obs_lik(t));
    let q = free_fn(model, |t| model.q_value(&stats, t));
    let kl = free_fn(model, |t| kl_posterior(model, theta_hat, t).unwrap_or(f64::NAN));
    let j_y = -fd::hessian(&loglik, &v);
    let jz_bar = -fd::hessian(&q, &v);
    let f_post = fd::hessian(&kl, &v);

    let chol = jz_bar.clone().cholesky().ok_or_else(|| {
        let eig = jz_bar.clone().symmetric_eigen();
        let bad: Vec<String> = (0..d)
            .filter(|&i| eig.eigenvalues[i] <= 0.0)
            .map(|i| {
                let col = eig.eigenvectors.column(i);
                let lead = col.iamax();
                format!("{} ({:.3e})", names[lead], eig.eigenvalues[i])
            })
            .collect();
        EmError::Singular(format!("complete-data information is not positive definite along {}", bad.join(", ")))
    })?;
    let s = chol.solve(&j_y);

    // L⁻¹ J_y L⁻ᵀ is symmetric and similar to S
    let l = chol.l();
    let l_inv = l.clone().try_inverse().ok_or_else(|| EmError::Singular("Cholesky factor".into()))?;
    let sym = &l_inv * &j_y * l_inv.transpose();
    let sym = (&sym + sym.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let global_speed = eigenvalues.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    let predicted_rate = eigenvalues.iter().map(|x| (1.0 - x).abs()).fold(0.0, f64::max);

    let phi_free = |x: &[f64]| -> Vec<f64> {
        match em_map(model, &model.from_free(x)) {
            Ok(t) => model.to_free(&t),
            Err(_) => vec![f64::NAN; d],
        }
    };
    let jacobian = fd::jacobian(&phi_free, &v);
    let jacobian_radius = jacobian.clone().complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max);
    let eye = DMatrix::<f64>::identity(d, d);
    let from_jacobian = &eye - &jacobian;
    let mut jacobian_gap: f64 = 0.0;
    for (a, b) in s.iter().zip(from_jacobian.iter()) {
        if a.abs() > CROSS_CHECK_FLOOR {
            jacobian_gap = jacobian_gap.max((a - b).abs() / a.abs());
        }
    }

    let scale = jz_bar.amax().max(f64::MIN_POSITIVE);
    let identity_residual = (&jz_bar - &j_y - &f_post).amax() / scale;
    let f_sym = (&f_post + f_post.transpose()) * 0.5;
    let f_post_min_eigenvalue = f_sym.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);

    Ok(SpeedDiagnostics {
        names,
        s,
        j_y,
        jz_bar,
        f_post,
        eigenvalues,
        global_speed,
        predicted_rate,
        jacobian,
        jacobian_radius,
        identity_residual,
        jacobian_gap,
        f_post_min_eigenvalue,
        residual,
    })
}

/// Most recent iterations used by [`observed_rate`].
pub const RATE_WINDOW: usize = 20;
/// Errors at or below this size are ignored by [`observed_rate`].
pub const RATE_ERROR_FLOOR: f64 = 1e-10;

/// Per-iteration contraction factor `exp(slope)` of the least-squares line
/// through `log ‖v_n − v̂‖₂`, using the last [`RATE_WINDOW`] iterates whose
/// error exceeds [`RATE_ERROR_FLOOR`]. `v` are free coordinates.
///
/// Returns `None` with fewer than three usable iterates.
pub fn observed_rate(path: &[Vec<f64>], v_hat: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = path
        .iter()
        .enumerate()
        .filter_map(|(n, v)| {
            let e = v.iter().zip(v_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            (e > RATE_ERROR_FLOOR).then(|| (n as f64, e.ln()))
        })
        .collect();
    let pts = &pts[pts.len().saturating_sub(RATE_WINDOW)..];
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / m, b + y / m));
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    Some((sxy / sxx).exp())
}
