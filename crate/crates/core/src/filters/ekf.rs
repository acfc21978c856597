use nalgebra::{DMatrix, DVector};

use super::{check_obs, predict_linearised, GaussianBelief, StateSpaceModel};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jitter, cholesky_solve_matrix};
use crate::scalar::{lit, Real};

/// Relative jitter for innovation covariances that round to indefinite
/// when the state is already pinned down by exact observations.
pub(crate) const INNOVATION_JITTER: f64 = 1e-12;

/// Extended Kalman filter step: linearised prediction through `Φ_{j-1}`,
/// then a Kalman update with the Jacobian of `f_j` at the predicted mean.
pub fn ekf_step<T: Real>(
    model: &StateSpaceModel<T>,
    j: usize,
    belief: &GaussianBelief<T>,
    y: &DVector<T>,
) -> Result<GaussianBelief<T>> {
    if j == 0 {
        return Err(Error::InvalidParameter("filter steps start at j = 1".into()));
    }
    check_obs(model, y)?;
    let pred = predict_linearised(model, j, belief)?;
    update(model, j, &pred, y)
}

/// Kalman update of a predicted belief with the linearisation of `f_j`.
pub(crate) fn update<T: Real>(
    model: &StateSpaceModel<T>,
    j: usize,
    pred: &GaussianBelief<T>,
    y: &DVector<T>,
) -> Result<GaussianBelief<T>> {
    let (fx, f) = model.observe(j, &pred.mean)?;
    let delta = y - fx;
    let pft = &pred.cov * f.transpose();
    let s = &f * &pft + model.obs_noise_floored(j);
    let (ls, _) = cholesky_jitter(&s, lit(INNOVATION_JITTER), 60)
        .map_err(|e| Error::IllConditioned(format!("innovation covariance: {e}")))?;
    // K = Σ⁻Fᵀ S⁻¹, formed as (S⁻¹ F Σ⁻)ᵀ
    let k = cholesky_solve_matrix(&ls, &pft.transpose()).transpose();
    let mean = &pred.mean + &k * delta;
    // Joseph form of Σ⁻ - K S Kᵀ, positive semi-definite under rounding
    let ikf = DMatrix::identity(pred.dim(), pred.dim()) - &k * &f;
    let cov = &ikf * &pred.cov * ikf.transpose() + &k * model.obs_noise_floored(j) * k.transpose();
    GaussianBelief::new(mean, cov)
}
